//! Cycle-accurate synchronous finite-state-machine kernel.
//!
//! A [`MachineDefinition`] is a clocked state machine: a finite set of
//! control states, input/output ports with bit widths, a register file of
//! internal signals, and per-state transition arms. One [`MachineDefinition::step`]
//! call is one rising clock edge:
//!
//! * the first arm of the current state whose guard matches fires and names
//!   the next state,
//! * Mealy outputs are resolved from the pre-step state, registers and the
//!   sampled inputs,
//! * register updates are evaluated against pre-step values and committed
//!   together (non-blocking assignment semantics),
//! * a machine-level synchronous reset port, when asserted, forces the next
//!   state to the initial state and re-initialises every register. The reset
//!   port never appears in guards or expressions; the kernel applies it.
//!
//! Inputs are sampled once per cycle; there are no intra-cycle events, no
//! multiple clock domains and no X/Z values. Every state must declare a
//! default arm, so transition and output functions are total by
//! construction.
//!
//! Machines are immutable once built and can be shared freely across
//! threads; all simulation state lives in the single-owner [`KernelState`].

mod expr;

pub use expr::{CmpOp, Expr, Guard};
pub(crate) use expr::{CExpr, CGuard, Truth};

use std::collections::HashMap;
use thiserror::Error;

/// Direction of a declared port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortDirection {
    Input,
    Output,
    /// Driven by the machine, readable back like an output. The input half
    /// is not modelled; stimulus cannot drive an inout port.
    InOut,
}

/// A declared port: name, bit width and direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: String,
    pub width: u32,
    pub direction: PortDirection,
}

impl PortDecl {
    /// Largest value representable in this port's width.
    pub fn max_value(&self) -> u64 {
        max_for_width(self.width)
    }
}

pub(crate) fn max_for_width(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A register: an internal signal with a width and a reset value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegDecl {
    pub name: String,
    pub width: u32,
    pub init: u64,
}

/// A value paired with the bit width it must fit in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalValue {
    value: u64,
    width: u32,
}

impl SignalValue {
    pub fn new(value: u64, width: u32) -> Result<SignalValue, SimError> {
        if width == 0 || width > 64 {
            return Err(SimError::BadWidth { width });
        }
        if value > max_for_width(width) {
            return Err(SimError::ValueTooWide { value, width });
        }
        Ok(SignalValue { value, width })
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width(&self) -> u32 {
        self.width
    }
}

/// Mealy machines compute outputs from state and inputs; Moore machines
/// from state alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineKind {
    Mealy,
    Moore,
}

#[derive(Debug, Clone)]
pub(crate) struct Arm {
    pub(crate) guard: CGuard,
    pub(crate) target: usize,
    pub(crate) updates: Vec<(usize, CExpr)>,
    pub(crate) outputs: Vec<(usize, CExpr)>,
}

#[derive(Debug, Clone)]
pub(crate) struct StateDef {
    pub(crate) name: String,
    pub(crate) updates: Vec<(usize, CExpr)>,
    pub(crate) outputs: Vec<(usize, CExpr)>,
    pub(crate) arms: Vec<Arm>,
    pub(crate) default: Arm,
}

/// An immutable synchronous machine definition. Build one with
/// [`MachineBuilder`].
#[derive(Debug, Clone)]
pub struct MachineDefinition {
    pub(crate) name: String,
    pub(crate) kind: MachineKind,
    pub(crate) inputs: Vec<PortDecl>,
    pub(crate) outputs: Vec<PortDecl>,
    pub(crate) registers: Vec<RegDecl>,
    pub(crate) reset_port: Option<usize>,
    pub(crate) states: Vec<StateDef>,
    pub(crate) initial: usize,
    pub(crate) continuous: Vec<(usize, CExpr)>,
    input_index: HashMap<String, usize>,
    output_index: HashMap<String, usize>,
    reg_index: HashMap<String, usize>,
    state_index: HashMap<String, usize>,
}

/// Errors raised while building a machine definition.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("machine has no states")]
    NoStates,
    #[error("duplicate port `{0}`")]
    DuplicatePort(String),
    #[error("duplicate register `{0}`")]
    DuplicateRegister(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("port `{name}` has invalid width {width} (must be 1..=64)")]
    PortWidth { name: String, width: u32 },
    #[error("register `{name}` has invalid width {width} (must be 1..=64)")]
    RegisterWidth { name: String, width: u32 },
    #[error("register `{name}` reset value {init} does not fit in {width} bits")]
    RegisterInit { name: String, init: u64, width: u32 },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown input port `{0}`")]
    UnknownInput(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("unknown output port `{0}`")]
    UnknownOutput(String),
    #[error("state `{0}` is missing a default arm")]
    MissingDefault(String),
    #[error("reset port `{0}` must be a 1-bit input")]
    BadResetPort(String),
    #[error("state `{state}` references the reset port; reset is applied by the kernel")]
    ResetReferenced { state: String },
    #[error("moore machine state `{state}` has input-dependent or arm-level outputs")]
    MooreOutputViolation { state: String },
}

/// Errors raised during simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("input `{port}` was not assigned this cycle")]
    MissingInput { port: String },
    #[error("unknown input port `{0}`")]
    UnknownInput(String),
    #[error("value {value} does not fit in {width} bits")]
    ValueTooWide { value: u64, width: u32 },
    #[error("invalid width {width} (must be 1..=64)")]
    BadWidth { width: u32 },
    #[error("computed value {value} for `{name}` exceeds its {width}-bit width")]
    WidthViolation { name: String, value: u64, width: u32 },
    #[error("input assignment was built for a different machine")]
    AssignmentMismatch,
    #[error("operation requires a moore machine")]
    NotMoore,
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
}

/// A full assignment of values to a machine's input ports for one cycle.
///
/// Every declared input must be assigned before the kernel will step;
/// partially assigned inputs are a contract violation, not an implicit zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputAssignment {
    values: Vec<u64>,
    assigned: Vec<bool>,
}

impl InputAssignment {
    /// Assigns `value` to input `name`, checking existence and width.
    pub fn set(
        &mut self,
        machine: &MachineDefinition,
        name: &str,
        value: u64,
    ) -> Result<&mut Self, SimError> {
        if self.values.len() != machine.inputs.len() {
            return Err(SimError::AssignmentMismatch);
        }
        let idx = machine
            .input_index(name)
            .ok_or_else(|| SimError::UnknownInput(name.to_string()))?;
        let width = machine.inputs[idx].width;
        if value > max_for_width(width) {
            return Err(SimError::ValueTooWide { value, width });
        }
        self.values[idx] = value;
        self.assigned[idx] = true;
        Ok(self)
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    fn check_complete(&self, machine: &MachineDefinition) -> Result<(), SimError> {
        if self.values.len() != machine.inputs.len() {
            return Err(SimError::AssignmentMismatch);
        }
        for (i, ok) in self.assigned.iter().enumerate() {
            if !ok {
                return Err(SimError::MissingInput {
                    port: machine.inputs[i].name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// One traced cycle: the state, register file and port values observed
/// while that cycle executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    /// Canonical index of the state the machine was in during this cycle.
    pub state: usize,
    /// Input values in machine input order.
    pub inputs: Vec<u64>,
    /// Output values in machine output order.
    pub outputs: Vec<u64>,
    /// Register values at the start of the cycle, in register order.
    pub regs: Vec<u64>,
}

/// Per-cycle record of every port value and the active state.
///
/// Carries its own copy of the port, register and state name tables so a
/// trace can be inspected or serialised without the machine at hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub(crate) machine_name: String,
    pub(crate) inputs: Vec<PortDecl>,
    pub(crate) outputs: Vec<PortDecl>,
    pub(crate) reg_names: Vec<String>,
    pub(crate) state_names: Vec<String>,
    pub(crate) records: Vec<TraceRecord>,
}

impl Trace {
    pub(crate) fn empty_for(machine: &MachineDefinition) -> Trace {
        Trace {
            machine_name: machine.name.clone(),
            inputs: machine.inputs.clone(),
            outputs: machine.outputs.clone(),
            reg_names: machine.registers.iter().map(|r| r.name.clone()).collect(),
            state_names: machine.states.iter().map(|s| s.name.clone()).collect(),
            records: Vec::new(),
        }
    }

    pub fn machine_name(&self) -> &str {
        &self.machine_name
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_ports(&self) -> &[PortDecl] {
        &self.inputs
    }

    pub fn output_ports(&self) -> &[PortDecl] {
        &self.outputs
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn reg_names(&self) -> &[String] {
        &self.reg_names
    }

    pub fn state_name(&self, record: &TraceRecord) -> &str {
        &self.state_names[record.state]
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|p| p.name == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|p| p.name == name)
    }

    pub fn reg_index(&self, name: &str) -> Option<usize> {
        self.reg_names.iter().position(|r| r == name)
    }

    /// Output value of `name` at `cycle`, as a width-checked signal value.
    pub fn output_value(&self, cycle: u64, name: &str) -> Option<SignalValue> {
        let idx = self.output_index(name)?;
        let rec = self.records.iter().find(|r| r.cycle == cycle)?;
        SignalValue::new(rec.outputs[idx], self.outputs[idx].width).ok()
    }

    /// Iterator over `(cycle, value)` for one output port.
    pub fn output_series<'a>(&'a self, name: &str) -> Option<impl Iterator<Item = (u64, u64)> + 'a> {
        let idx = self.output_index(name)?;
        Some(self.records.iter().map(move |r| (r.cycle, r.outputs[idx])))
    }
}

/// The mutable half of a simulation: current state, register file, cycle
/// counter and the accumulated trace.
#[derive(Debug, Clone)]
pub struct KernelState {
    current: usize,
    cycle: u64,
    regs: Vec<u64>,
    trace: Trace,
}

impl KernelState {
    pub fn new(machine: &MachineDefinition) -> KernelState {
        KernelState {
            current: machine.initial,
            cycle: 0,
            regs: machine.initial_regs(),
            trace: Trace::empty_for(machine),
        }
    }

    /// Kernel positioned at an arbitrary state with selected register
    /// overrides. Intended for state-space probing and tests.
    pub fn at(
        machine: &MachineDefinition,
        state: &str,
        reg_overrides: &[(&str, u64)],
    ) -> Result<KernelState, SimError> {
        let idx = machine
            .state_index(state)
            .ok_or_else(|| SimError::UnknownState(state.to_string()))?;
        let mut regs = machine.initial_regs();
        for (name, value) in reg_overrides {
            let r = machine
                .reg_index(name)
                .ok_or_else(|| SimError::UnknownRegister(name.to_string()))?;
            let width = machine.registers[r].width;
            if *value > max_for_width(width) {
                return Err(SimError::ValueTooWide { value: *value, width });
            }
            regs[r] = *value;
        }
        Ok(KernelState {
            current: idx,
            cycle: 0,
            regs,
            trace: Trace::empty_for(machine),
        })
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn regs(&self) -> &[u64] {
        &self.regs
    }

    pub fn reg_value(&self, machine: &MachineDefinition, name: &str) -> Option<u64> {
        machine.reg_index(name).map(|i| self.regs[i])
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }
}

impl MachineDefinition {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MachineKind {
        self.kind
    }

    pub fn inputs(&self) -> &[PortDecl] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[PortDecl] {
        &self.outputs
    }

    /// All ports in declaration order: inputs first, then outputs.
    pub fn ports(&self) -> impl Iterator<Item = &PortDecl> {
        self.inputs.iter().chain(self.outputs.iter())
    }

    pub fn registers(&self) -> &[RegDecl] {
        &self.registers
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn state_name(&self, idx: usize) -> &str {
        &self.states[idx].name
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.input_index.get(name).copied()
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output_index.get(name).copied()
    }

    pub fn reg_index(&self, name: &str) -> Option<usize> {
        self.reg_index.get(name).copied()
    }

    pub fn reset_port_name(&self) -> Option<&str> {
        self.reset_port.map(|i| self.inputs[i].name.as_str())
    }

    pub fn initial_regs(&self) -> Vec<u64> {
        self.registers.iter().map(|r| r.init).collect()
    }

    /// Sum of the widths of all declared input ports.
    pub fn input_bits_total(&self) -> u32 {
        self.inputs.iter().map(|p| p.width).sum()
    }

    /// An assignment with no inputs set yet.
    pub fn inputs_unset(&self) -> InputAssignment {
        InputAssignment {
            values: vec![0; self.inputs.len()],
            assigned: vec![false; self.inputs.len()],
        }
    }

    /// An assignment with every input driven to zero.
    pub fn zero_inputs(&self) -> InputAssignment {
        InputAssignment {
            values: vec![0; self.inputs.len()],
            assigned: vec![true; self.inputs.len()],
        }
    }

    /// Full assignment from raw values in input-port order.
    pub fn assignment_from_values(&self, values: &[u64]) -> Result<InputAssignment, SimError> {
        if values.len() != self.inputs.len() {
            return Err(SimError::AssignmentMismatch);
        }
        for (decl, value) in self.inputs.iter().zip(values) {
            if *value > decl.max_value() {
                return Err(SimError::ValueTooWide {
                    value: *value,
                    width: decl.width,
                });
            }
        }
        Ok(InputAssignment {
            values: values.to_vec(),
            assigned: vec![true; values.len()],
        })
    }

    /// Zeroed assignment with the named ports overridden.
    pub fn inputs_with(&self, pairs: &[(&str, u64)]) -> Result<InputAssignment, SimError> {
        let mut ia = self.zero_inputs();
        for (name, value) in pairs {
            ia.set(self, name, *value)?;
        }
        Ok(ia)
    }

    /// Value of output `name` within a step's output vector.
    pub fn output_value(&self, outputs: &[u64], name: &str) -> Option<u64> {
        self.output_index(name).map(|i| outputs[i])
    }

    pub(crate) fn firing_arm(&self, state: usize, inputs: &[u64], regs: &[u64]) -> &Arm {
        let def = &self.states[state];
        for arm in &def.arms {
            if arm.guard.eval(inputs, regs) {
                return arm;
            }
        }
        &def.default
    }

    fn resolve_outputs(
        &self,
        state: usize,
        regs: &[u64],
        inputs: &[u64],
        arm: Option<&Arm>,
    ) -> Result<Vec<u64>, SimError> {
        let mut out = vec![0u64; self.outputs.len()];
        let assign = |out: &mut Vec<u64>, port: usize, expr: &CExpr| -> Result<(), SimError> {
            let v = expr.eval(inputs, regs);
            let width = self.outputs[port].width;
            if v > max_for_width(width) as u128 {
                return Err(SimError::WidthViolation {
                    name: self.outputs[port].name.clone(),
                    value: v.min(u64::MAX as u128) as u64,
                    width,
                });
            }
            out[port] = v as u64;
            Ok(())
        };
        for (port, expr) in &self.continuous {
            assign(&mut out, *port, expr)?;
        }
        for (port, expr) in &self.states[state].outputs {
            assign(&mut out, *port, expr)?;
        }
        if let Some(arm) = arm {
            for (port, expr) in &arm.outputs {
                assign(&mut out, *port, expr)?;
            }
        }
        Ok(out)
    }

    fn apply_updates(
        &self,
        state: usize,
        arm: &Arm,
        regs: &[u64],
        inputs: &[u64],
    ) -> Result<Vec<u64>, SimError> {
        let mut next = regs.to_vec();
        for (reg, expr) in self.states[state].updates.iter().chain(arm.updates.iter()) {
            let v = expr.eval(inputs, regs);
            let width = self.registers[*reg].width;
            if v > max_for_width(width) as u128 {
                return Err(SimError::WidthViolation {
                    name: self.registers[*reg].name.clone(),
                    value: v.min(u64::MAX as u128) as u64,
                    width,
                });
            }
            next[*reg] = v as u64;
        }
        Ok(next)
    }

    /// Pure single-step evaluation: `(state, regs, inputs)` to
    /// `(next state, next regs, outputs)`. Reset, when asserted, overrides
    /// the transition and the register file; outputs on a reset cycle are
    /// the initial state's own outputs over freshly reset registers.
    pub fn eval_step(
        &self,
        state: usize,
        regs: &[u64],
        inputs: &[u64],
    ) -> Result<(usize, Vec<u64>, Vec<u64>), SimError> {
        if let Some(r) = self.reset_port {
            if inputs[r] != 0 {
                let fresh = self.initial_regs();
                let outputs = self.resolve_outputs(self.initial, &fresh, inputs, None)?;
                return Ok((self.initial, fresh, outputs));
            }
        }
        let arm = self.firing_arm(state, inputs, regs);
        let outputs = self.resolve_outputs(state, regs, inputs, Some(arm))?;
        let next_regs = self.apply_updates(state, arm, regs, inputs)?;
        Ok((arm.target, next_regs, outputs))
    }

    /// Advances the kernel by one clock edge and returns the cycle's output
    /// values in output-port order. The kernel is left untouched on error.
    pub fn step(
        &self,
        kernel: &mut KernelState,
        inputs: &InputAssignment,
    ) -> Result<Vec<u64>, SimError> {
        inputs.check_complete(self)?;
        let (next, next_regs, outputs) =
            self.eval_step(kernel.current, &kernel.regs, inputs.values())?;
        kernel.trace.records.push(TraceRecord {
            cycle: kernel.cycle,
            state: kernel.current,
            inputs: inputs.values().to_vec(),
            outputs: outputs.clone(),
            regs: kernel.regs.clone(),
        });
        kernel.current = next;
        kernel.regs = next_regs;
        kernel.cycle += 1;
        Ok(outputs)
    }

    /// Runs a fresh kernel through a dense cycle-indexed schedule of input
    /// assignments and returns the trace. A zero-length schedule yields a
    /// single power-on snapshot record with all inputs at zero.
    pub fn run_schedule(&self, schedule: &[InputAssignment]) -> Result<Trace, SimError> {
        let mut kernel = KernelState::new(self);
        if schedule.is_empty() {
            let zeros = self.zero_inputs();
            let arm = self.firing_arm(kernel.current, zeros.values(), &kernel.regs);
            let outputs =
                self.resolve_outputs(kernel.current, &kernel.regs, zeros.values(), Some(arm))?;
            kernel.trace.records.push(TraceRecord {
                cycle: 0,
                state: kernel.current,
                inputs: zeros.values().to_vec(),
                outputs,
                regs: kernel.regs.clone(),
            });
            return Ok(kernel.into_trace());
        }
        for ia in schedule {
            self.step(&mut kernel, ia)?;
        }
        Ok(kernel.into_trace())
    }

    /// Moore output lookup: the outputs a Moore machine emits while sitting
    /// in `config`. Errors on Mealy machines, whose outputs also depend on
    /// the inputs.
    pub fn moore_output(&self, config: &Configuration) -> Result<Vec<u64>, SimError> {
        if self.kind != MachineKind::Moore {
            return Err(SimError::NotMoore);
        }
        let zeros = vec![0u64; self.inputs.len()];
        self.resolve_outputs(config.state, &config.regs, &zeros, None)
    }
}

/// A dynamic configuration of a machine: control state plus register file.
///
/// For machines without registers this is just a state; for converted Moore
/// machines the register half carries the latched output values, so a
/// configuration is exactly a (state, output) pair of the product
/// construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub state: usize,
    pub regs: Vec<u64>,
}

impl Configuration {
    pub fn initial(machine: &MachineDefinition) -> Configuration {
        Configuration {
            state: machine.initial,
            regs: machine.initial_regs(),
        }
    }

    pub fn new(
        machine: &MachineDefinition,
        state: &str,
        reg_values: &[(&str, u64)],
    ) -> Result<Configuration, SimError> {
        let kernel = KernelState::at(machine, state, reg_values)?;
        Ok(Configuration {
            state: kernel.current,
            regs: kernel.regs,
        })
    }
}

impl MachineDefinition {
    /// Output-registering rewrite behind [`crate::analysis::mealy_to_moore`]:
    /// every output expression is latched into a fresh register on each
    /// transition and the ports are re-driven from those registers, so the
    /// emitted outputs depend on state alone and lag the original machine by
    /// one cycle. Register valuations double as the (state, output) pairs of
    /// the classic product construction.
    pub(crate) fn to_moore(&self) -> Result<MachineDefinition, SimError> {
        let zeros = vec![0u64; self.inputs.len()];
        let (_, _, init_outputs) = self.eval_step(self.initial, &self.initial_regs(), &zeros)?;

        let mut registers = self.registers.clone();
        let mut out_regs = Vec::with_capacity(self.outputs.len());
        for (port, init) in self.outputs.iter().zip(&init_outputs) {
            let mut name = format!("out_{}", port.name);
            while registers.iter().any(|r| r.name == name) {
                name.insert(0, '_');
            }
            out_regs.push(registers.len());
            registers.push(RegDecl {
                name,
                width: port.width,
                init: *init,
            });
        }

        let effective = |state: &StateDef, arm: &Arm, port: usize| -> CExpr {
            let pick = |list: &[(usize, CExpr)]| {
                list.iter()
                    .rev()
                    .find(|(p, _)| *p == port)
                    .map(|(_, e)| e.clone())
            };
            pick(&arm.outputs)
                .or_else(|| pick(&state.outputs))
                .or_else(|| pick(&self.continuous))
                .unwrap_or(CExpr::Const(0))
        };

        let states: Vec<StateDef> = self
            .states
            .iter()
            .map(|s| {
                let rewrite = |arm: &Arm| -> Arm {
                    let mut updates = arm.updates.clone();
                    for (port, reg) in out_regs.iter().enumerate() {
                        updates.push((*reg, effective(s, arm, port)));
                    }
                    Arm {
                        guard: arm.guard.clone(),
                        target: arm.target,
                        updates,
                        outputs: Vec::new(),
                    }
                };
                StateDef {
                    name: s.name.clone(),
                    updates: s.updates.clone(),
                    outputs: Vec::new(),
                    arms: s.arms.iter().map(rewrite).collect(),
                    default: rewrite(&s.default),
                }
            })
            .collect();

        let continuous = out_regs
            .iter()
            .enumerate()
            .map(|(port, reg)| (port, CExpr::Reg(*reg)))
            .collect();
        let reg_index = registers
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.clone(), i))
            .collect();

        Ok(MachineDefinition {
            name: format!("{}_moore", self.name),
            kind: MachineKind::Moore,
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            registers,
            reset_port: self.reset_port,
            states,
            initial: self.initial,
            continuous,
            input_index: self.input_index.clone(),
            output_index: self.output_index.clone(),
            reg_index,
            state_index: self.state_index.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

struct ArmProto {
    guard: Guard,
    target: StateRef,
    updates: Vec<(String, Expr)>,
    outputs: Vec<(String, Expr)>,
}

enum StateRef {
    Named(String),
    SelfLoop,
}

struct StateProto {
    name: String,
    updates: Vec<(String, Expr)>,
    outputs: Vec<(String, Expr)>,
    arms: Vec<ArmProto>,
    default: Option<ArmProto>,
}

/// Fluent builder for [`MachineDefinition`].
///
/// Ports and registers must be declared before states so that state bodies
/// can reference them; targets may reference states declared later. The
/// first declared state is the initial state unless [`MachineBuilder::initial`]
/// overrides it.
pub struct MachineBuilder {
    name: String,
    kind: MachineKind,
    inputs: Vec<PortDecl>,
    outputs: Vec<PortDecl>,
    registers: Vec<RegDecl>,
    reset: Option<String>,
    continuous: Vec<(String, Expr)>,
    states: Vec<StateProto>,
    initial: Option<String>,
}

/// Per-state body under construction; see [`MachineBuilder::state`].
pub struct StateBuilder {
    proto: StateProto,
}

/// Extra register updates and output overrides attached to one arm.
pub struct ArmBuilder {
    updates: Vec<(String, Expr)>,
    outputs: Vec<(String, Expr)>,
}

impl ArmBuilder {
    pub fn update(mut self, reg: &str, expr: Expr) -> Self {
        self.updates.push((reg.to_string(), expr));
        self
    }

    pub fn emit(mut self, port: &str, expr: Expr) -> Self {
        self.outputs.push((port.to_string(), expr));
        self
    }
}

impl StateBuilder {
    /// Register update applied on every cycle spent in this state.
    pub fn update(mut self, reg: &str, expr: Expr) -> Self {
        self.proto.updates.push((reg.to_string(), expr));
        self
    }

    /// Output assignment applied on every cycle spent in this state.
    pub fn emit(mut self, port: &str, expr: Expr) -> Self {
        self.proto.outputs.push((port.to_string(), expr));
        self
    }

    /// Adds a guarded arm. Arms are tried in declaration order; the first
    /// match fires.
    pub fn arm(mut self, guard: Guard, target: &str) -> Self {
        self.proto.arms.push(ArmProto {
            guard,
            target: StateRef::Named(target.to_string()),
            updates: Vec::new(),
            outputs: Vec::new(),
        });
        self
    }

    /// Adds a guarded arm carrying its own updates and output overrides.
    pub fn arm_with(
        mut self,
        guard: Guard,
        target: &str,
        f: impl FnOnce(ArmBuilder) -> ArmBuilder,
    ) -> Self {
        let ab = f(ArmBuilder {
            updates: Vec::new(),
            outputs: Vec::new(),
        });
        self.proto.arms.push(ArmProto {
            guard,
            target: StateRef::Named(target.to_string()),
            updates: ab.updates,
            outputs: ab.outputs,
        });
        self
    }

    /// The required default arm: fires when no guard matched.
    pub fn otherwise(mut self, target: &str) -> Self {
        self.proto.default = Some(ArmProto {
            guard: Guard::Always,
            target: StateRef::Named(target.to_string()),
            updates: Vec::new(),
            outputs: Vec::new(),
        });
        self
    }

    /// Default arm that stays in this state.
    pub fn otherwise_stay(mut self) -> Self {
        self.proto.default = Some(ArmProto {
            guard: Guard::Always,
            target: StateRef::SelfLoop,
            updates: Vec::new(),
            outputs: Vec::new(),
        });
        self
    }

    /// Default arm with extra updates or output overrides.
    pub fn otherwise_with(
        mut self,
        target: &str,
        f: impl FnOnce(ArmBuilder) -> ArmBuilder,
    ) -> Self {
        let ab = f(ArmBuilder {
            updates: Vec::new(),
            outputs: Vec::new(),
        });
        self.proto.default = Some(ArmProto {
            guard: Guard::Always,
            target: StateRef::Named(target.to_string()),
            updates: ab.updates,
            outputs: ab.outputs,
        });
        self
    }
}

impl MachineBuilder {
    pub fn new(name: &str, kind: MachineKind) -> MachineBuilder {
        MachineBuilder {
            name: name.to_string(),
            kind,
            inputs: Vec::new(),
            outputs: Vec::new(),
            registers: Vec::new(),
            reset: None,
            continuous: Vec::new(),
            states: Vec::new(),
            initial: None,
        }
    }

    pub fn input(mut self, name: &str, width: u32) -> Self {
        self.inputs.push(PortDecl {
            name: name.to_string(),
            width,
            direction: PortDirection::Input,
        });
        self
    }

    pub fn output(mut self, name: &str, width: u32) -> Self {
        self.outputs.push(PortDecl {
            name: name.to_string(),
            width,
            direction: PortDirection::Output,
        });
        self
    }

    pub fn inout(mut self, name: &str, width: u32) -> Self {
        self.outputs.push(PortDecl {
            name: name.to_string(),
            width,
            direction: PortDirection::InOut,
        });
        self
    }

    pub fn register(mut self, name: &str, width: u32, init: u64) -> Self {
        self.registers.push(RegDecl {
            name: name.to_string(),
            width,
            init,
        });
        self
    }

    /// Declares which input port acts as the synchronous reset.
    pub fn reset_port(mut self, name: &str) -> Self {
        self.reset = Some(name.to_string());
        self
    }

    /// Output assignment active in every state (lowest priority).
    pub fn continuous_assign(mut self, port: &str, expr: Expr) -> Self {
        self.continuous.push((port.to_string(), expr));
        self
    }

    pub fn initial(mut self, name: &str) -> Self {
        self.initial = Some(name.to_string());
        self
    }

    /// Declares a state and its transition table.
    pub fn state(mut self, name: &str, f: impl FnOnce(StateBuilder) -> StateBuilder) -> Self {
        let sb = f(StateBuilder {
            proto: StateProto {
                name: name.to_string(),
                updates: Vec::new(),
                outputs: Vec::new(),
                arms: Vec::new(),
                default: None,
            },
        });
        self.states.push(sb.proto);
        self
    }

    pub fn build(self) -> Result<MachineDefinition, BuildError> {
        if self.states.is_empty() {
            return Err(BuildError::NoStates);
        }

        let mut seen = HashMap::new();
        for p in self.inputs.iter().chain(self.outputs.iter()) {
            if p.width == 0 || p.width > 64 {
                return Err(BuildError::PortWidth {
                    name: p.name.clone(),
                    width: p.width,
                });
            }
            if seen.insert(p.name.clone(), ()).is_some() {
                return Err(BuildError::DuplicatePort(p.name.clone()));
            }
        }

        let mut reg_index = HashMap::new();
        for (i, r) in self.registers.iter().enumerate() {
            if r.width == 0 || r.width > 64 {
                return Err(BuildError::RegisterWidth {
                    name: r.name.clone(),
                    width: r.width,
                });
            }
            if r.init > max_for_width(r.width) {
                return Err(BuildError::RegisterInit {
                    name: r.name.clone(),
                    init: r.init,
                    width: r.width,
                });
            }
            if reg_index.insert(r.name.clone(), i).is_some() {
                return Err(BuildError::DuplicateRegister(r.name.clone()));
            }
        }

        let input_index: HashMap<String, usize> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        let output_index: HashMap<String, usize> = self
            .outputs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();

        let reset_port = match &self.reset {
            None => None,
            Some(name) => {
                let idx = *input_index
                    .get(name)
                    .ok_or_else(|| BuildError::BadResetPort(name.clone()))?;
                if self.inputs[idx].width != 1 {
                    return Err(BuildError::BadResetPort(name.clone()));
                }
                Some(idx)
            }
        };

        let mut state_index = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if state_index.insert(s.name.clone(), i).is_some() {
                return Err(BuildError::DuplicateState(s.name.clone()));
            }
        }

        let initial = match &self.initial {
            Some(name) => *state_index
                .get(name)
                .ok_or_else(|| BuildError::UnknownState(name.clone()))?,
            None => 0,
        };

        let compile_expr = |e: &Expr| -> Result<CExpr, BuildError> {
            compile_expr(e, &input_index, &reg_index)
        };
        let compile_pairs = |pairs: &[(String, Expr)],
                             table: &HashMap<String, usize>,
                             unknown: fn(String) -> BuildError|
         -> Result<Vec<(usize, CExpr)>, BuildError> {
            pairs
                .iter()
                .map(|(name, e)| {
                    let idx = *table.get(name).ok_or_else(|| unknown(name.clone()))?;
                    Ok((idx, compile_expr(e)?))
                })
                .collect()
        };

        let continuous =
            compile_pairs(&self.continuous, &output_index, BuildError::UnknownOutput)?;

        let mut states = Vec::with_capacity(self.states.len());
        for (i, proto) in self.states.iter().enumerate() {
            let compile_arm = |a: &ArmProto| -> Result<Arm, BuildError> {
                let target = match &a.target {
                    StateRef::SelfLoop => i,
                    StateRef::Named(n) => *state_index
                        .get(n)
                        .ok_or_else(|| BuildError::UnknownState(n.clone()))?,
                };
                Ok(Arm {
                    guard: compile_guard(&a.guard, &input_index, &reg_index)?,
                    target,
                    updates: compile_pairs(&a.updates, &reg_index, BuildError::UnknownRegister)?,
                    outputs: compile_pairs(&a.outputs, &output_index, BuildError::UnknownOutput)?,
                })
            };
            let default = proto
                .default
                .as_ref()
                .ok_or_else(|| BuildError::MissingDefault(proto.name.clone()))?;
            states.push(StateDef {
                name: proto.name.clone(),
                updates: compile_pairs(&proto.updates, &reg_index, BuildError::UnknownRegister)?,
                outputs: compile_pairs(&proto.outputs, &output_index, BuildError::UnknownOutput)?,
                arms: proto.arms.iter().map(compile_arm).collect::<Result<_, _>>()?,
                default: compile_arm(default)?,
            });
        }

        let machine = MachineDefinition {
            name: self.name,
            kind: self.kind,
            inputs: self.inputs,
            outputs: self.outputs,
            registers: self.registers,
            reset_port,
            states,
            initial,
            continuous,
            input_index,
            output_index,
            reg_index,
            state_index,
        };

        machine.validate_reset_isolation()?;
        machine.validate_moore()?;
        Ok(machine)
    }
}

fn compile_expr(
    e: &Expr,
    inputs: &HashMap<String, usize>,
    regs: &HashMap<String, usize>,
) -> Result<CExpr, BuildError> {
    Ok(match e {
        Expr::Const(v) => CExpr::Const(*v),
        Expr::Input(name) => CExpr::Input(
            *inputs
                .get(name)
                .ok_or_else(|| BuildError::UnknownInput(name.clone()))?,
        ),
        Expr::Reg(name) => CExpr::Reg(
            *regs
                .get(name)
                .ok_or_else(|| BuildError::UnknownRegister(name.clone()))?,
        ),
        Expr::Add(a, b) => CExpr::Add(
            Box::new(compile_expr(a, inputs, regs)?),
            Box::new(compile_expr(b, inputs, regs)?),
        ),
        Expr::Sub(a, b) => CExpr::Sub(
            Box::new(compile_expr(a, inputs, regs)?),
            Box::new(compile_expr(b, inputs, regs)?),
        ),
        Expr::Mul(a, b) => CExpr::Mul(
            Box::new(compile_expr(a, inputs, regs)?),
            Box::new(compile_expr(b, inputs, regs)?),
        ),
        Expr::Min(a, b) => CExpr::Min(
            Box::new(compile_expr(a, inputs, regs)?),
            Box::new(compile_expr(b, inputs, regs)?),
        ),
    })
}

fn compile_guard(
    g: &Guard,
    inputs: &HashMap<String, usize>,
    regs: &HashMap<String, usize>,
) -> Result<CGuard, BuildError> {
    Ok(match g {
        Guard::Always => CGuard::Always,
        Guard::InputBit { port, expect_high } => CGuard::InputBit {
            port: *inputs
                .get(port)
                .ok_or_else(|| BuildError::UnknownInput(port.clone()))?,
            expect_high: *expect_high,
        },
        Guard::Cmp { lhs, op, rhs } => CGuard::Cmp {
            lhs: compile_expr(lhs, inputs, regs)?,
            op: *op,
            rhs: compile_expr(rhs, inputs, regs)?,
        },
        Guard::All(gs) => CGuard::All(
            gs.iter()
                .map(|g| compile_guard(g, inputs, regs))
                .collect::<Result<_, _>>()?,
        ),
    })
}

impl MachineDefinition {
    fn validate_reset_isolation(&self) -> Result<(), BuildError> {
        let Some(reset) = self.reset_port else {
            return Ok(());
        };
        let expr_refs = |e: &CExpr| -> bool {
            fn walk(e: &CExpr, port: usize) -> bool {
                match e {
                    CExpr::Input(i) => *i == port,
                    CExpr::Const(_) | CExpr::Reg(_) => false,
                    CExpr::Add(a, b) | CExpr::Sub(a, b) | CExpr::Mul(a, b) | CExpr::Min(a, b) => {
                        walk(a, port) || walk(b, port)
                    }
                }
            }
            walk(e, reset)
        };
        for s in &self.states {
            let arms = s.arms.iter().chain(std::iter::once(&s.default));
            let mut touched = s.updates.iter().chain(s.outputs.iter()).map(|(_, e)| e).any(&expr_refs);
            for arm in arms {
                touched = touched
                    || arm.guard.references_port(reset)
                    || arm.updates.iter().chain(arm.outputs.iter()).map(|(_, e)| e).any(&expr_refs);
            }
            if touched {
                return Err(BuildError::ResetReferenced {
                    state: s.name.clone(),
                });
            }
        }
        Ok(())
    }

    fn validate_moore(&self) -> Result<(), BuildError> {
        if self.kind != MachineKind::Moore {
            return Ok(());
        }
        for (_, e) in &self.continuous {
            if e.reads_input() {
                return Err(BuildError::MooreOutputViolation {
                    state: "<continuous>".to_string(),
                });
            }
        }
        for s in &self.states {
            if s.outputs.iter().any(|(_, e)| e.reads_input()) {
                return Err(BuildError::MooreOutputViolation {
                    state: s.name.clone(),
                });
            }
            let has_arm_outputs = s
                .arms
                .iter()
                .chain(std::iter::once(&s.default))
                .any(|a| !a.outputs.is_empty());
            if has_arm_outputs {
                return Err(BuildError::MooreOutputViolation {
                    state: s.name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toggle() -> MachineDefinition {
        MachineBuilder::new("toggle", MachineKind::Mealy)
            .output("parity", 1)
            .state("s0", |s| s.emit("parity", Expr::konst(0)).otherwise("s1"))
            .state("s1", |s| s.emit("parity", Expr::konst(1)).otherwise("s0"))
            .build()
            .unwrap()
    }

    #[test]
    fn toggle_runs_five_steps() {
        let m = toggle();
        let mut kernel = KernelState::new(&m);
        let zeros = m.zero_inputs();
        let mut visited = Vec::new();
        for _ in 0..5 {
            visited.push(m.state_name(kernel.current()).to_string());
            m.step(&mut kernel, &zeros).unwrap();
        }
        assert_eq!(visited, ["s0", "s1", "s0", "s1", "s0"]);
        assert_eq!(kernel.cycle(), 5);
    }

    #[test]
    fn trace_records_are_per_cycle() {
        let m = toggle();
        let mut kernel = KernelState::new(&m);
        let zeros = m.zero_inputs();
        for _ in 0..3 {
            m.step(&mut kernel, &zeros).unwrap();
        }
        let trace = kernel.into_trace();
        let cycles: Vec<u64> = trace.records().iter().map(|r| r.cycle).collect();
        assert_eq!(cycles, [0, 1, 2]);
        assert_eq!(trace.output_value(1, "parity").unwrap().value(), 1);
    }

    #[test]
    fn missing_input_is_rejected() {
        let m = MachineBuilder::new("m", MachineKind::Mealy)
            .input("enable", 1)
            .output("q", 1)
            .state("s", |s| s.otherwise_stay())
            .build()
            .unwrap();
        let mut kernel = KernelState::new(&m);
        let ia = m.inputs_unset();
        let err = m.step(&mut kernel, &ia).unwrap_err();
        assert!(matches!(err, SimError::MissingInput { .. }));
        assert_eq!(kernel.cycle(), 0);
    }

    #[test]
    fn input_width_is_enforced() {
        let m = MachineBuilder::new("m", MachineKind::Mealy)
            .input("narrow", 2)
            .output("q", 1)
            .state("s", |s| s.otherwise_stay())
            .build()
            .unwrap();
        let mut ia = m.zero_inputs();
        assert!(matches!(
            ia.set(&m, "narrow", 4),
            Err(SimError::ValueTooWide { .. })
        ));
        assert!(ia.set(&m, "narrow", 3).is_ok());
    }

    #[test]
    fn synchronous_reset_forces_initial_state_and_registers() {
        let m = MachineBuilder::new("m", MachineKind::Mealy)
            .input("reset", 1)
            .input("go", 1)
            .output("count", 4)
            .register("ctr", 4, 0)
            .reset_port("reset")
            .continuous_assign("count", Expr::reg("ctr"))
            .state("idle", |s| {
                s.arm_with(Guard::input_high("go"), "busy", |a| {
                    a.update("ctr", Expr::reg("ctr").add(Expr::konst(1)))
                })
                .otherwise_stay()
            })
            .state("busy", |s| s.otherwise_stay())
            .build()
            .unwrap();
        let mut kernel = KernelState::new(&m);
        m.step(&mut kernel, &m.inputs_with(&[("go", 1)]).unwrap()).unwrap();
        assert_eq!(m.state_name(kernel.current()), "busy");
        assert_eq!(kernel.reg_value(&m, "ctr"), Some(1));
        let out = m
            .step(&mut kernel, &m.inputs_with(&[("reset", 1), ("go", 1)]).unwrap())
            .unwrap();
        assert_eq!(m.state_name(kernel.current()), "idle");
        assert_eq!(kernel.reg_value(&m, "ctr"), Some(0));
        // reset-cycle outputs already reflect re-initialised registers
        assert_eq!(m.output_value(&out, "count"), Some(0));
    }

    #[test]
    fn guards_may_not_touch_the_reset_port() {
        let err = MachineBuilder::new("m", MachineKind::Mealy)
            .input("reset", 1)
            .output("q", 1)
            .reset_port("reset")
            .state("s", |s| {
                s.arm(Guard::input_high("reset"), "s").otherwise_stay()
            })
            .build()
            .unwrap_err();
        assert!(matches!(err, BuildError::ResetReferenced { .. }));
    }

    #[test]
    fn default_arm_is_mandatory() {
        let err = MachineBuilder::new("m", MachineKind::Mealy)
            .output("q", 1)
            .state("s", |s| s)
            .build()
            .unwrap_err();
        assert!(matches!(err, BuildError::MissingDefault(_)));
    }

    #[test]
    fn moore_machines_reject_input_dependent_outputs() {
        let err = MachineBuilder::new("m", MachineKind::Moore)
            .input("x", 1)
            .output("q", 1)
            .state("s", |s| s.emit("q", Expr::input("x")).otherwise_stay())
            .build()
            .unwrap_err();
        assert!(matches!(err, BuildError::MooreOutputViolation { .. }));
    }

    #[test]
    fn moore_output_is_input_free() {
        let m = MachineBuilder::new("m", MachineKind::Moore)
            .input("x", 1)
            .output("q", 1)
            .state("s", |s| s.emit("q", Expr::konst(0)).otherwise_stay())
            .build()
            .unwrap();
        let out = m.moore_output(&Configuration::initial(&m)).unwrap();
        assert_eq!(out, vec![0]);
    }

    #[test]
    fn moore_output_rejects_mealy_machines() {
        let m = toggle();
        assert!(matches!(
            m.moore_output(&Configuration::initial(&m)),
            Err(SimError::NotMoore)
        ));
    }

    #[test]
    fn empty_schedule_yields_power_on_snapshot() {
        let m = toggle();
        let trace = m.run_schedule(&[]).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.records()[0].cycle, 0);
        assert_eq!(trace.state_name(&trace.records()[0]), "s0");
    }

    #[test]
    fn signal_value_bounds() {
        assert!(SignalValue::new(127, 7).is_ok());
        assert!(matches!(
            SignalValue::new(128, 7),
            Err(SimError::ValueTooWide { .. })
        ));
        assert!(matches!(SignalValue::new(0, 0), Err(SimError::BadWidth { .. })));
        assert_eq!(SignalValue::new(u64::MAX, 64).unwrap().value(), u64::MAX);
    }

    #[test]
    fn determinism_identical_runs_identical_traces() {
        let m = toggle();
        let schedule: Vec<InputAssignment> = (0..16).map(|_| m.zero_inputs()).collect();
        let a = m.run_schedule(&schedule).unwrap();
        let b = m.run_schedule(&schedule).unwrap();
        assert_eq!(a, b);
    }
}
