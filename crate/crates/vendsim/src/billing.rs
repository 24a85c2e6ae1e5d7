//! Session billing: a ledger of dispensed products and its rendered bill.
//!
//! The ledger snapshots unit prices when the session opens, counts each
//! dispense, and renders to either a machine-readable JSON document with a
//! stable field order or a plain-text bill with one line per item and a
//! TOTAL line. Unlike the controller's 7-bit `money` register, the ledger
//! total is unbounded and stays exact past the register's saturation point.

use crate::controller::{ProductCatalog, ProductId};
use crate::fsm::Trace;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BillingError {
    #[error("product `{0}` is not in this session's catalog")]
    UnknownProduct(String),
    #[error("trace has no `product` output port")]
    NoProductPort,
    #[error("dispense pulse outside a vend state at cycle {cycle} (state `{state}`)")]
    ForeignDispense { cycle: u64, state: String },
}

/// Running ledger for one vending session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BillLedger {
    /// Catalog-ordered (product, unit price) snapshot taken at session start.
    prices: Vec<(ProductId, u32)>,
    quantities: Vec<u64>,
    session_start_cycle: u64,
}

/// One rendered bill line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineItem {
    pub name: String,
    pub unit_price: u32,
    pub quantity: u64,
    pub subtotal: u64,
}

/// A rendered bill. Field order is stable so serialised documents can be
/// compared byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BillDocument {
    pub currency: String,
    pub items: Vec<LineItem>,
    pub total: u64,
}

impl BillLedger {
    pub fn new(catalog: &ProductCatalog) -> BillLedger {
        BillLedger::with_session_start(catalog, 0)
    }

    pub fn with_session_start(catalog: &ProductCatalog, cycle: u64) -> BillLedger {
        BillLedger {
            prices: catalog.products().iter().map(|p| (p.id, p.price)).collect(),
            quantities: vec![0; catalog.len()],
            session_start_cycle: cycle,
        }
    }

    pub fn session_start_cycle(&self) -> u64 {
        self.session_start_cycle
    }

    /// Counts one dispense of `p` at its snapshotted unit price.
    pub fn record_dispense(&mut self, p: ProductId) -> Result<(), BillingError> {
        let idx = self
            .prices
            .iter()
            .position(|(id, _)| *id == p)
            .ok_or_else(|| BillingError::UnknownProduct(p.to_string()))?;
        self.quantities[idx] += 1;
        Ok(())
    }

    pub fn quantity(&self, p: ProductId) -> u64 {
        self.prices
            .iter()
            .position(|(id, _)| *id == p)
            .map(|i| self.quantities[i])
            .unwrap_or(0)
    }

    /// Exact total of all dispenses this session.
    pub fn total(&self) -> u64 {
        self.prices
            .iter()
            .zip(&self.quantities)
            .map(|((_, price), qty)| *price as u64 * qty)
            .sum()
    }

    /// Rebuilds a ledger from a simulation trace by counting `product`
    /// pulses per vend state.
    pub fn from_trace(trace: &Trace, catalog: &ProductCatalog) -> Result<BillLedger, BillingError> {
        let product_idx = trace
            .output_index("product")
            .ok_or(BillingError::NoProductPort)?;
        let mut ledger = BillLedger::new(catalog);
        for record in trace.records() {
            if record.outputs[product_idx] == 0 {
                continue;
            }
            let state = trace.state_name(record);
            let dispensed = state
                .strip_prefix("vend_")
                .and_then(ProductId::parse)
                .ok_or_else(|| BillingError::ForeignDispense {
                    cycle: record.cycle,
                    state: state.to_string(),
                })?;
            ledger.record_dispense(dispensed)?;
        }
        Ok(ledger)
    }

    /// Renders the bill: items in catalog order, zero-quantity products
    /// omitted, grand total equal to the sum of subtotals.
    pub fn render_bill(&self) -> BillDocument {
        let items: Vec<LineItem> = self
            .prices
            .iter()
            .zip(&self.quantities)
            .filter(|(_, qty)| **qty > 0)
            .map(|((id, price), qty)| LineItem {
                name: id.to_string(),
                unit_price: *price,
                quantity: *qty,
                subtotal: *price as u64 * qty,
            })
            .collect();
        BillDocument {
            currency: "INR".to_string(),
            total: items.iter().map(|i| i.subtotal).sum(),
            items,
        }
    }
}

impl BillDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bill serialises")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&format!(
                "{:<12} {:>3} x {:>3} = {:>5}\n",
                item.name, item.quantity, item.unit_price, item.subtotal
            ));
        }
        out.push_str(&format!("TOTAL {} {}\n", self.total, self.currency));
        out
    }
}
