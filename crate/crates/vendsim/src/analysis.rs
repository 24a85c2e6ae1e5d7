//! Static machine analysis: reachability, dot export, Mealy-to-Moore
//! conversion and a desk-scale resource report.
//!
//! Reachability walks the control graph symbolically: guards over input
//! bits are enumerated exactly (the total input width is capped), while
//! comparisons involving registers are treated as satisfiable in either
//! direction. The result is exact for machines whose guards only read
//! inputs and a safe over-approximation otherwise — every state a
//! simulation can visit is always included.

use crate::fsm::{Configuration, MachineDefinition, MachineKind, SimError, Truth};
use serde::Serialize;
use std::collections::{HashSet, VecDeque};
use thiserror::Error;

/// Total input width above which exhaustive input enumeration is refused.
pub const INPUT_ENUM_CAP_BITS: u32 = 20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(
        "input space of {bits} bits exceeds the {INPUT_ENUM_CAP_BITS}-bit enumeration cap; \
         project unused ports away first"
    )]
    InputSpaceTooLarge { bits: u32 },
    #[error("configuration space exceeds the cap of {cap} configurations")]
    ConfigurationSpaceExceeded { cap: usize },
    #[error("conversion requires a mealy machine")]
    NotMealy,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Outcome of [`reachable_states`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityReport {
    /// Canonical indices of reachable states, ascending.
    pub reachable: Vec<usize>,
    /// Declared states no input sequence can reach.
    pub unreachable: Vec<usize>,
}

impl ReachabilityReport {
    pub fn all_reachable(&self) -> bool {
        self.unreachable.is_empty()
    }
}

fn check_input_cap(machine: &MachineDefinition) -> Result<u32, AnalysisError> {
    let bits = machine.input_bits_total();
    if bits > INPUT_ENUM_CAP_BITS {
        return Err(AnalysisError::InputSpaceTooLarge { bits });
    }
    Ok(bits)
}

fn decode_inputs(machine: &MachineDefinition, mut packed: u64) -> Vec<u64> {
    let mut values = Vec::with_capacity(machine.inputs().len());
    for port in machine.inputs() {
        let mask = if port.width >= 64 {
            u64::MAX
        } else {
            (1u64 << port.width) - 1
        };
        values.push(packed & mask);
        packed >>= port.width;
    }
    values
}

/// Control states reachable from the initial state under some input
/// sequence. Guards that compare registers are assumed satisfiable, which
/// keeps the walk on the declared control graph.
pub fn reachable_states(machine: &MachineDefinition) -> Result<ReachabilityReport, AnalysisError> {
    let bits = check_input_cap(machine)?;
    let combos = 1u64 << bits;

    let mut seen = vec![false; machine.state_count()];
    seen[machine.initial_state()] = true;
    let mut queue = VecDeque::from([machine.initial_state()]);
    while let Some(state) = queue.pop_front() {
        let mut targets = HashSet::new();
        for packed in 0..combos {
            let inputs = decode_inputs(machine, packed);
            successors_symbolic(machine, state, &inputs, &mut targets);
        }
        for t in targets {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }

    let (reachable, unreachable): (Vec<usize>, Vec<usize>) =
        (0..machine.state_count()).partition(|i| seen[*i]);
    Ok(ReachabilityReport {
        reachable,
        unreachable,
    })
}

/// Collects possible successors of `state` under one concrete input
/// assignment, with register contents unknown: the first definitely-true
/// arm ends the walk; arms of unknown truth contribute their target and the
/// walk continues; the default arm applies when no arm is definitely true.
fn successors_symbolic(
    machine: &MachineDefinition,
    state: usize,
    inputs: &[u64],
    targets: &mut HashSet<usize>,
) {
    if let Some(reset) = machine.reset_port {
        if inputs[reset] != 0 {
            targets.insert(machine.initial_state());
            return;
        }
    }
    let def = &machine.states[state];
    for arm in &def.arms {
        match arm.guard.eval_symbolic(inputs) {
            Truth::True => {
                targets.insert(arm.target);
                return;
            }
            Truth::Unknown => {
                targets.insert(arm.target);
            }
            Truth::False => {}
        }
    }
    targets.insert(def.default.target);
}

/// Enumerates every reachable `(state, registers)` configuration by
/// exhaustive BFS over concrete input assignments. Refuses machines whose
/// input or configuration space is too large to enumerate.
pub fn reachable_configurations(
    machine: &MachineDefinition,
    cap: usize,
) -> Result<Vec<Configuration>, AnalysisError> {
    let bits = check_input_cap(machine)?;
    let combos = 1u64 << bits;

    let start = Configuration::initial(machine);
    let mut seen: HashSet<Configuration> = HashSet::from([start.clone()]);
    let mut order = vec![start.clone()];
    let mut queue = VecDeque::from([start]);
    while let Some(config) = queue.pop_front() {
        for packed in 0..combos {
            let inputs = decode_inputs(machine, packed);
            let (state, regs, _) = machine.eval_step(config.state, &config.regs, &inputs)?;
            let next = Configuration { state, regs };
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    return Err(AnalysisError::ConfigurationSpaceExceeded { cap });
                }
                order.push(next.clone());
                queue.push_back(next);
            }
        }
    }
    Ok(order)
}

/// Graphviz dot rendering of the control graph. Nodes appear in canonical
/// state order; each state's edges are sorted by guard label, so the output
/// is byte-stable for a given machine.
pub fn to_dot(machine: &MachineDefinition) -> String {
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", escape(machine.name())));
    out.push_str("  rankdir=LR;\n");
    if let Some(reset) = machine.reset_port_name() {
        out.push_str(&format!(
            "  // synchronous reset: {}=1 forces \"{}\" at the next edge\n",
            reset,
            escape(machine.state_name(machine.initial_state()))
        ));
    }
    for (i, def) in machine.states.iter().enumerate() {
        let shape = if i == machine.initial_state() {
            " [peripheries=2]"
        } else {
            ""
        };
        out.push_str(&format!("  \"{}\"{};\n", escape(&def.name), shape));
    }
    let input_names: Vec<String> = machine.inputs().iter().map(|p| p.name.clone()).collect();
    let reg_names: Vec<String> = machine.registers().iter().map(|r| r.name.clone()).collect();
    for def in &machine.states {
        let mut edges: Vec<(String, &str)> = def
            .arms
            .iter()
            .map(|arm| {
                (
                    arm.guard.render(&input_names, &reg_names),
                    machine.state_name(arm.target),
                )
            })
            .collect();
        edges.push(("otherwise".to_string(), machine.state_name(def.default.target)));
        edges.sort();
        for (label, target) in edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                escape(&def.name),
                escape(target),
                escape(&label)
            ));
        }
    }
    out.push_str("}\n");
    out
}

/// Standard Mealy-to-Moore conversion.
///
/// The converted machine latches every output expression into a dedicated
/// register on each transition and drives the ports from those registers,
/// so outputs depend on state alone. Its reachable configurations are
/// exactly the reachable (state, output) pairs of the product construction,
/// and for every reset-free input sequence the Moore output at cycle `t+1`
/// equals the Mealy output at cycle `t`. The Moore output at cycle 0 is the
/// Mealy output function evaluated at the initial state with all-zero
/// inputs.
pub fn mealy_to_moore(machine: &MachineDefinition) -> Result<MachineDefinition, AnalysisError> {
    if machine.kind() != MachineKind::Mealy {
        return Err(AnalysisError::NotMealy);
    }
    Ok(machine.to_moore()?)
}

/// Desk-scale stand-in for a synthesis utilization summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResourceReport {
    pub machine: String,
    pub states: usize,
    /// Distinct (state, guard) transition arcs, defaults included.
    pub transitions: usize,
    /// Minimum flip-flops for a binary state encoding.
    pub min_state_bits: u32,
    /// Total declared I/O width in bits.
    pub io_bits: u32,
}

impl ResourceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_text(&self) -> String {
        format!(
            "machine         {}\nstates          {}\ntransitions     {}\nmin state bits  {}\nio bits         {}\n",
            self.machine, self.states, self.transitions, self.min_state_bits, self.io_bits
        )
    }
}

pub fn resource_report(machine: &MachineDefinition) -> ResourceReport {
    let states = machine.state_count();
    let min_state_bits = if states <= 1 {
        0
    } else {
        usize::BITS - (states - 1).leading_zeros()
    };
    ResourceReport {
        machine: machine.name().to_string(),
        states,
        transitions: machine.states.iter().map(|s| s.arms.len() + 1).sum(),
        min_state_bits,
        io_bits: machine.ports().map(|p| p.width).sum(),
    }
}
