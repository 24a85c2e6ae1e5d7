//! The four-product vending-machine controller.
//!
//! A Mealy machine over the port list `reset, sel1..sel4, cancel, rs_10,
//! rs_20, serviced` (inputs), `money` (inout) and `product, change, return,
//! service_request` (outputs). The transaction flow:
//!
//! * `initialize` — waits for a one-hot selection on `sel1..sel4`. A
//!   non-one-hot select vector is ignored. Notes inserted here are echoed
//!   straight back on `return` (nothing is on sale yet).
//! * `select_<p>` — checks inventory; empty stock diverts to `service`.
//! * `waiting_<p>` — accepts a 10 or 20 rupee note (`rs_10`/`rs_20`, mutually
//!   exclusive; both-at-once is a no-op) or `cancel`. A note moves to the
//!   matching accumulate state.
//! * `state1_<p>` / `state2_<p>` — add 10 or 20 to `money_count`, then
//!   dispense when `money_count` reaches the price, else return to waiting.
//!   A note that would push `money_count` past its 7-bit ceiling is rejected
//!   and echoed on `return` the same cycle.
//! * `vend_<p>` — one-cycle dispense pulse: `product=1`,
//!   `change = money_count - price`, inventory decremented, the `money`
//!   total bumped (saturating at 127), `money_count` cleared.
//! * `cancel` — one-cycle refund pulse: `return = money_count`, then back to
//!   `initialize`.
//! * `service` — holds `service_request=1` until the `serviced` input
//!   refills every product to capacity.
//!
//! Asserting `reset` in any state clears the registers and jumps to
//! `initialize` on the next edge; held money is dropped without a refund
//! (cancel is the refund path). `money_count` accumulates per transaction;
//! `money` accumulates per session.
//!
//! Note on the accumulate states: dispensing happens only from `vend_<p>`
//! after the threshold test in `state1`/`state2`; the accumulate states
//! themselves never pulse `product`, and the machine ignores notes while it
//! is busy in them, so a testbench must land each note on a waiting cycle.

use crate::fsm::{
    BuildError, CmpOp, Expr, Guard, InputAssignment, MachineBuilder, MachineDefinition,
    MachineKind,
};
use thiserror::Error;

/// Ceiling of the 7-bit money registers and ports.
pub const MONEY_MAX: u32 = 127;

/// The two accepted bank notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Note {
    Ten,
    Twenty,
}

impl Note {
    pub fn value(self) -> u32 {
        match self {
            Note::Ten => 10,
            Note::Twenty => 20,
        }
    }
}

/// The four products the machine can vend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProductId {
    Snacks,
    Coffee,
    ColdDrink,
    Candies,
}

impl ProductId {
    pub const ALL: [ProductId; 4] = [
        ProductId::Snacks,
        ProductId::Coffee,
        ProductId::ColdDrink,
        ProductId::Candies,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProductId::Snacks => "snacks",
            ProductId::Coffee => "coffee",
            ProductId::ColdDrink => "cold_drink",
            ProductId::Candies => "candies",
        }
    }

    pub fn parse(name: &str) -> Option<ProductId> {
        match name.trim().to_ascii_lowercase().replace(' ', "_").as_str() {
            "snacks" => Some(ProductId::Snacks),
            "coffee" => Some(ProductId::Coffee),
            "cold_drink" | "colddrink" => Some(ProductId::ColdDrink),
            "candies" => Some(ProductId::Candies),
            _ => None,
        }
    }
}

impl std::fmt::Display for ProductId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A product with its price in rupees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Product {
    pub id: ProductId,
    pub price: u32,
}

/// Ordered product list; the position determines the select port
/// (`sel1` selects the first product).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductCatalog {
    products: Vec<Product>,
}

/// Errors raised while validating a catalog or building the controller.
#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("catalog has no products")]
    EmptyCatalog,
    #[error("catalog has {0} products; at most 4 select lines exist")]
    TooManyProducts(usize),
    #[error("product `{0}` appears twice in the catalog")]
    DuplicateProduct(ProductId),
    #[error("product `{product}` has price {price}, which is not a positive multiple of 10")]
    PriceNotMultipleOfTen { product: ProductId, price: u32 },
    #[error("product `{product}` has price {price}, which does not fit the 7-bit money path")]
    PriceTooWide { product: ProductId, price: u32 },
    #[error("inventory capacity must be at least 1")]
    ZeroCapacity,
    #[error("money_count {money_count} is below price {price}; dispensing is unreachable here")]
    ChangeUnderflow { money_count: u32, price: u32 },
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

impl ProductCatalog {
    pub fn new(products: Vec<Product>) -> Result<ProductCatalog, ControllerError> {
        if products.is_empty() {
            return Err(ControllerError::EmptyCatalog);
        }
        if products.len() > 4 {
            return Err(ControllerError::TooManyProducts(products.len()));
        }
        for (i, p) in products.iter().enumerate() {
            if products[..i].iter().any(|q| q.id == p.id) {
                return Err(ControllerError::DuplicateProduct(p.id));
            }
            if p.price > MONEY_MAX {
                return Err(ControllerError::PriceTooWide {
                    product: p.id,
                    price: p.price,
                });
            }
            if p.price == 0 || p.price % 10 != 0 {
                return Err(ControllerError::PriceNotMultipleOfTen {
                    product: p.id,
                    price: p.price,
                });
            }
        }
        Ok(ProductCatalog { products })
    }

    /// The paper's catalog: snacks 30, coffee 40, cold drink 40, candies 30.
    pub fn standard() -> ProductCatalog {
        ProductCatalog {
            products: vec![
                Product { id: ProductId::Snacks, price: 30 },
                Product { id: ProductId::Coffee, price: 40 },
                Product { id: ProductId::ColdDrink, price: 40 },
                Product { id: ProductId::Candies, price: 30 },
            ],
        }
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn index_of(&self, id: ProductId) -> Option<usize> {
        self.products.iter().position(|p| p.id == id)
    }

    pub fn price(&self, id: ProductId) -> Option<u32> {
        self.products.iter().find(|p| p.id == id).map(|p| p.price)
    }

    /// Select port name for the product at `index` (`sel1` for index 0).
    pub fn select_port(&self, index: usize) -> String {
        format!("sel{}", index + 1)
    }
}

/// Per-product stock levels with a shared capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    capacity: u32,
    counts: Vec<(ProductId, u32)>,
}

impl Inventory {
    pub fn full(catalog: &ProductCatalog, capacity: u32) -> Inventory {
        Inventory {
            capacity,
            counts: catalog.products().iter().map(|p| (p.id, capacity)).collect(),
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn count(&self, id: ProductId) -> Option<u32> {
        self.counts.iter().find(|(p, _)| *p == id).map(|(_, c)| *c)
    }

    pub fn counts(&self) -> &[(ProductId, u32)] {
        &self.counts
    }

    pub fn set_count(&mut self, id: ProductId, count: u32) {
        if let Some(slot) = self.counts.iter_mut().find(|(p, _)| *p == id) {
            slot.1 = count.min(self.capacity);
        }
    }

    pub fn refill(&mut self) {
        for slot in &mut self.counts {
            slot.1 = self.capacity;
        }
    }
}

/// True when at least one unit of `p` is in stock.
pub fn availability(inventory: &Inventory, p: ProductId) -> bool {
    inventory.count(p).map(|c| c > 0).unwrap_or(false)
}

/// Result of offering a note to the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoteOutcome {
    /// The note was added to `money_count`.
    Accepted { money_count: u32 },
    /// Adding the note would exceed the 7-bit ceiling; `money_count` is
    /// unchanged and the note value is echoed on `return` this cycle.
    Rejected { money_count: u32, echoed: u32 },
}

impl NoteOutcome {
    pub fn money_count(&self) -> u32 {
        match self {
            NoteOutcome::Accepted { money_count } => *money_count,
            NoteOutcome::Rejected { money_count, .. } => *money_count,
        }
    }
}

/// Adds a note to `money_count`, rejecting it when the sum would not fit in
/// seven bits.
pub fn accumulate(money_count: u32, note: Note) -> NoteOutcome {
    let sum = money_count + note.value();
    if sum > MONEY_MAX {
        NoteOutcome::Rejected {
            money_count,
            echoed: note.value(),
        }
    } else {
        NoteOutcome::Accepted { money_count: sum }
    }
}

/// Change owed when dispensing at `price` with `money_count` held.
pub fn compute_change(money_count: u32, price: u32) -> Result<u32, ControllerError> {
    if money_count < price {
        return Err(ControllerError::ChangeUnderflow { money_count, price });
    }
    Ok(money_count - price)
}

/// Control state of the vending machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerState {
    Initialize,
    Select(ProductId),
    Waiting(ProductId),
    State1(ProductId),
    State2(ProductId),
    Vend(ProductId),
    Service,
    Cancel,
}

/// Register file of the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerRegisters {
    /// Notes accumulated in the current transaction (7-bit).
    pub money_count: u32,
    /// Session total of dispensed-product prices, saturating at 127.
    pub money: u32,
    pub inventory: Inventory,
}

/// One cycle of input to the typed step function.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControllerInputs {
    /// Select lines in catalog order (`sel1` first).
    pub select: Vec<bool>,
    pub cancel: bool,
    pub rs_10: bool,
    pub rs_20: bool,
    pub serviced: bool,
}

/// Observable outputs for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControllerOutputs {
    pub product: bool,
    pub change: u32,
    pub return_out: u32,
    pub service_request: bool,
    /// Value on the `money` inout port this cycle.
    pub money: u32,
}

/// The built controller: the machine definition plus the catalog and
/// capacity it was built from.
#[derive(Debug, Clone)]
pub struct VendingController {
    machine: MachineDefinition,
    catalog: ProductCatalog,
    capacity: u32,
}

/// Builds the controller machine for `catalog` and returns it without the
/// typed wrapper. See [`VendingController::build`].
pub fn build_controller(
    catalog: ProductCatalog,
    capacity: u32,
) -> Result<MachineDefinition, ControllerError> {
    VendingController::build(catalog, capacity).map(VendingController::into_machine)
}

fn bits_for(max: u32) -> u32 {
    (32 - max.leading_zeros()).max(1)
}

impl VendingController {
    pub fn build(catalog: ProductCatalog, capacity: u32) -> Result<VendingController, ControllerError> {
        // re-validate so catalogs built by hand cannot sneak bad prices in
        let catalog = ProductCatalog::new(catalog.products.clone())?;
        if capacity == 0 {
            return Err(ControllerError::ZeroCapacity);
        }

        let money_limit = Expr::konst(MONEY_MAX as u64);
        let count_width = bits_for(capacity);

        let mut b = MachineBuilder::new("vending", MachineKind::Mealy)
            .input("reset", 1);
        for i in 0..catalog.len() {
            b = b.input(&catalog.select_port(i), 1);
        }
        b = b
            .input("cancel", 1)
            .input("rs_10", 1)
            .input("rs_20", 1)
            .input("serviced", 1)
            .inout("money", 7)
            .output("product", 1)
            .output("change", 7)
            .output("return", 7)
            .output("service_request", 1)
            .register("money_count", 7, 0)
            .register("money", 7, 0);
        for p in catalog.products() {
            b = b.register(&format!("{}_count", p.id), count_width, capacity as u64);
        }
        b = b
            .reset_port("reset")
            .continuous_assign("money", Expr::reg("money"));

        // echo of any note offered while nothing is on sale
        let note_echo = Expr::input("rs_10")
            .mul(Expr::konst(10))
            .add(Expr::input("rs_20").mul(Expr::konst(20)));

        let one_hot = |selected: usize, total: usize| {
            Guard::all((0..total).map(|j| {
                let port = format!("sel{}", j + 1);
                if j == selected {
                    Guard::input_high(&port)
                } else {
                    Guard::input_low(&port)
                }
            }))
        };

        b = b.state("initialize", |mut s| {
            s = s
                .update("money_count", Expr::konst(0))
                .emit("return", note_echo.clone());
            for (i, p) in catalog.products().iter().enumerate() {
                s = s.arm(one_hot(i, catalog.len()), &format!("select_{}", p.id));
            }
            s.otherwise_stay()
        });

        for p in catalog.products() {
            let id = p.id;
            let price = p.price as u64;
            let count_reg = format!("{id}_count");

            b = b.state(&format!("select_{id}"), |s| {
                s.arm(
                    Guard::cmp(Expr::reg(&count_reg), CmpOp::Gt, Expr::konst(0)),
                    &format!("waiting_{id}"),
                )
                .otherwise("service")
            });

            b = b.state(&format!("waiting_{id}"), |s| {
                s.arm(Guard::input_high("cancel"), "cancel")
                    .arm(
                        Guard::all([Guard::input_high("rs_10"), Guard::input_low("rs_20")]),
                        &format!("state1_{id}"),
                    )
                    .arm(
                        Guard::all([Guard::input_low("rs_10"), Guard::input_high("rs_20")]),
                        &format!("state2_{id}"),
                    )
                    .otherwise_stay()
            });

            for (tag, note) in [("state1", 10u64), ("state2", 20u64)] {
                let summed = Expr::reg("money_count").add(Expr::konst(note));
                b = b.state(&format!("{tag}_{id}"), |s| {
                    s.arm_with(
                        Guard::cmp(summed.clone(), CmpOp::Gt, money_limit.clone()),
                        &format!("waiting_{id}"),
                        |a| a.emit("return", Expr::konst(note)),
                    )
                    .arm_with(
                        Guard::cmp(summed.clone(), CmpOp::Ge, Expr::konst(price)),
                        &format!("vend_{id}"),
                        |a| a.update("money_count", summed.clone()),
                    )
                    .otherwise_with(&format!("waiting_{id}"), |a| {
                        a.update("money_count", summed.clone())
                    })
                });
            }

            let new_total = Expr::reg("money")
                .add(Expr::konst(price))
                .min(Expr::konst(MONEY_MAX as u64));
            b = b.state(&format!("vend_{id}"), |s| {
                s.emit("product", Expr::konst(1))
                    .emit("change", Expr::reg("money_count").sub(Expr::konst(price)))
                    .emit("money", new_total.clone())
                    .update("money_count", Expr::konst(0))
                    .update(&count_reg, Expr::reg(&count_reg).sub(Expr::konst(1)))
                    .update("money", new_total.clone())
                    .otherwise("initialize")
            });
        }

        b = b.state("service", |mut s| {
            s = s.emit("service_request", Expr::konst(1));
            let mut refill = |a: crate::fsm::ArmBuilder| {
                let mut a = a;
                for p in catalog.products() {
                    a = a.update(&format!("{}_count", p.id), Expr::konst(capacity as u64));
                }
                a
            };
            s.arm_with(Guard::input_high("serviced"), "initialize", &mut refill)
                .otherwise_stay()
        });

        b = b.state("cancel", |s| {
            s.emit("return", Expr::reg("money_count"))
                .update("money_count", Expr::konst(0))
                .otherwise("initialize")
        });

        let machine = b.initial("initialize").build()?;
        Ok(VendingController {
            machine,
            catalog,
            capacity,
        })
    }

    /// Table-1 catalog at the paper's capacity of 4.
    pub fn standard() -> VendingController {
        VendingController::build(ProductCatalog::standard(), 4)
            .expect("standard catalog always builds")
    }

    pub fn machine(&self) -> &MachineDefinition {
        &self.machine
    }

    pub fn into_machine(self) -> MachineDefinition {
        self.machine
    }

    pub fn catalog(&self) -> &ProductCatalog {
        &self.catalog
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Machine state name for a typed controller state.
    pub fn state_label(&self, state: ControllerState) -> String {
        match state {
            ControllerState::Initialize => "initialize".to_string(),
            ControllerState::Select(p) => format!("select_{p}"),
            ControllerState::Waiting(p) => format!("waiting_{p}"),
            ControllerState::State1(p) => format!("state1_{p}"),
            ControllerState::State2(p) => format!("state2_{p}"),
            ControllerState::Vend(p) => format!("vend_{p}"),
            ControllerState::Service => "service".to_string(),
            ControllerState::Cancel => "cancel".to_string(),
        }
    }

    /// Typed view of a machine state index.
    pub fn decode_state(&self, index: usize) -> ControllerState {
        let name = self.machine.state_name(index);
        self.parse_state(name)
            .expect("controller machine states are all decodable")
    }

    fn parse_state(&self, name: &str) -> Option<ControllerState> {
        match name {
            "initialize" => return Some(ControllerState::Initialize),
            "service" => return Some(ControllerState::Service),
            "cancel" => return Some(ControllerState::Cancel),
            _ => {}
        }
        for (prefix, make) in [
            ("select_", ControllerState::Select as fn(ProductId) -> ControllerState),
            ("waiting_", ControllerState::Waiting),
            ("state1_", ControllerState::State1),
            ("state2_", ControllerState::State2),
            ("vend_", ControllerState::Vend),
        ] {
            if let Some(rest) = name.strip_prefix(prefix) {
                return ProductId::parse(rest).map(make);
            }
        }
        None
    }

    pub fn encode_state(&self, state: ControllerState) -> Option<usize> {
        self.machine.state_index(&self.state_label(state))
    }

    /// Fresh register file: empty accumulators, full inventory.
    pub fn initial_registers(&self) -> ControllerRegisters {
        ControllerRegisters {
            money_count: 0,
            money: 0,
            inventory: Inventory::full(&self.catalog, self.capacity),
        }
    }

    pub fn encode_regs(&self, regs: &ControllerRegisters) -> Vec<u64> {
        let mut out = vec![regs.money_count as u64, regs.money as u64];
        for p in self.catalog.products() {
            out.push(regs.inventory.count(p.id).unwrap_or(0) as u64);
        }
        out
    }

    pub fn decode_regs(&self, raw: &[u64]) -> ControllerRegisters {
        let mut inventory = Inventory::full(&self.catalog, self.capacity);
        for (i, p) in self.catalog.products().iter().enumerate() {
            inventory.set_count(p.id, raw[2 + i] as u32);
        }
        ControllerRegisters {
            money_count: raw[0] as u32,
            money: raw[1] as u32,
            inventory,
        }
    }

    pub fn encode_inputs(&self, inputs: &ControllerInputs) -> InputAssignment {
        let mut pairs: Vec<(String, u64)> = Vec::new();
        for (i, on) in inputs.select.iter().enumerate() {
            pairs.push((self.catalog.select_port(i), *on as u64));
        }
        pairs.push(("cancel".into(), inputs.cancel as u64));
        pairs.push(("rs_10".into(), inputs.rs_10 as u64));
        pairs.push(("rs_20".into(), inputs.rs_20 as u64));
        pairs.push(("serviced".into(), inputs.serviced as u64));
        let as_ref: Vec<(&str, u64)> = pairs.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        self.machine
            .inputs_with(&as_ref)
            .expect("controller input names are declared")
    }

    pub fn decode_outputs(&self, raw: &[u64]) -> ControllerOutputs {
        let get = |name: &str| self.machine.output_value(raw, name).unwrap_or(0);
        ControllerOutputs {
            product: get("product") != 0,
            change: get("change") as u32,
            return_out: get("return") as u32,
            service_request: get("service_request") != 0,
            money: get("money") as u32,
        }
    }

    /// The normative transition table, written out directly over the typed
    /// domain. This is a second, independent route to the same behaviour as
    /// the built machine; the test suite checks the two agree everywhere.
    pub fn controller_step(
        &self,
        state: ControllerState,
        regs: &ControllerRegisters,
        inputs: &ControllerInputs,
    ) -> (ControllerState, ControllerRegisters, ControllerOutputs) {
        let mut next_regs = regs.clone();
        let mut out = ControllerOutputs {
            money: regs.money,
            ..ControllerOutputs::default()
        };

        let selected = {
            let hot: Vec<usize> = inputs
                .select
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(i, _)| i)
                .collect();
            if hot.len() == 1 {
                Some(self.catalog.products()[hot[0]].id)
            } else {
                None
            }
        };

        let next = match state {
            ControllerState::Initialize => {
                next_regs.money_count = 0;
                out.return_out =
                    10 * (inputs.rs_10 as u32) + 20 * (inputs.rs_20 as u32);
                match selected {
                    Some(p) => ControllerState::Select(p),
                    None => ControllerState::Initialize,
                }
            }
            ControllerState::Select(p) => {
                if availability(&regs.inventory, p) {
                    ControllerState::Waiting(p)
                } else {
                    ControllerState::Service
                }
            }
            ControllerState::Waiting(p) => {
                if inputs.cancel {
                    ControllerState::Cancel
                } else if inputs.rs_10 && !inputs.rs_20 {
                    ControllerState::State1(p)
                } else if !inputs.rs_10 && inputs.rs_20 {
                    ControllerState::State2(p)
                } else {
                    ControllerState::Waiting(p)
                }
            }
            ControllerState::State1(p) | ControllerState::State2(p) => {
                let note = if matches!(state, ControllerState::State1(_)) {
                    Note::Ten
                } else {
                    Note::Twenty
                };
                let price = self.catalog.price(p).expect("product is in catalog");
                match accumulate(regs.money_count, note) {
                    NoteOutcome::Rejected { echoed, .. } => {
                        out.return_out = echoed;
                        ControllerState::Waiting(p)
                    }
                    NoteOutcome::Accepted { money_count } => {
                        next_regs.money_count = money_count;
                        if money_count >= price {
                            ControllerState::Vend(p)
                        } else {
                            ControllerState::Waiting(p)
                        }
                    }
                }
            }
            ControllerState::Vend(p) => {
                let price = self.catalog.price(p).expect("product is in catalog");
                out.product = true;
                out.change = compute_change(regs.money_count, price)
                    .expect("vend is only reachable at or above the price");
                let total = (regs.money + price).min(MONEY_MAX);
                out.money = total;
                next_regs.money = total;
                next_regs.money_count = 0;
                let count = regs.inventory.count(p).unwrap_or(0);
                next_regs.inventory.set_count(p, count.saturating_sub(1));
                ControllerState::Initialize
            }
            ControllerState::Cancel => {
                out.return_out = regs.money_count;
                next_regs.money_count = 0;
                ControllerState::Initialize
            }
            ControllerState::Service => {
                out.service_request = true;
                if inputs.serviced {
                    next_regs.inventory.refill();
                    ControllerState::Initialize
                } else {
                    ControllerState::Service
                }
            }
        };
        (next, next_regs, out)
    }
}
