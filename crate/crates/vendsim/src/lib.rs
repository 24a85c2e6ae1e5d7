//! Cycle-accurate simulation toolkit for synchronous finite state machines,
//! built around a four-product vending-machine controller.
//!
//! The crate has three layers:
//!
//! * [`fsm`] — a generic clocked Mealy/Moore kernel: machines are built from
//!   states, guarded transition arms, registers and ports, then stepped one
//!   clock edge at a time with full per-cycle tracing.
//! * [`controller`] — the vending machine itself: product selection on
//!   `sel1..sel4`, note accumulation on `rs_10`/`rs_20`, dispensing with
//!   change, cancel/refund, inventory tracking and a servicing state, with
//!   [`billing`] keeping the session ledger.
//! * Tooling — [`stimulus`] parses `.stim` testbench scripts, [`vcd`] writes
//!   Value Change Dump waveforms, [`analysis`] does reachability, dot
//!   export, resource reporting and Mealy-to-Moore conversion, and [`repl`]
//!   provides the interactive session behind `vendsim repl`.
//!
//! Every major capability has a runnable example:
//!
//! ```bash
//! cargo run --example purchase_snacks     # select, pay 10+20, dispense
//! cargo run --example cancel_refund      # abort a purchase, money back
//! cargo run --example inventory_service  # sell out, service, refill
//! cargo run --example scripted_stimulus  # drive a run from a .stim script
//! cargo run --example waveform_export    # write a .vcd waveform file
//! cargo run --example custom_machine     # define your own machine
//! cargo run --example mealy_to_moore     # output-registering conversion
//! cargo run --example analyze_controller # reachability, dot, resources
//! cargo run --example session_billing    # multi-purchase bill rendering
//! ```

pub mod analysis;
pub mod billing;
pub mod config;
pub mod controller;
pub mod fsm;
pub mod repl;
pub mod stimulus;
pub mod vcd;
