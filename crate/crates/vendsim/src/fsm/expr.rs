//! Expression and guard language for machine definitions.
//!
//! Transition guards and register/output assignments are small symbolic
//! expressions over the declared input ports and registers. Keeping them
//! symbolic (rather than opaque closures) lets the analysis pass render
//! guard labels, check that Moore outputs never read an input, and rewrite
//! machines (e.g. the Mealy-to-Moore conversion registers every output
//! expression).

use std::fmt;

/// Arithmetic expression over input ports, registers and constants.
///
/// Built with names; name resolution happens when the machine is built.
/// Evaluation is unsigned. `sub` saturates at zero and `min` exists so
/// saturating accumulators can be written as `min(a + b, cap)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(u64),
    Input(String),
    Reg(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn konst(value: u64) -> Expr {
        Expr::Const(value)
    }

    pub fn input(name: &str) -> Expr {
        Expr::Input(name.to_string())
    }

    pub fn reg(name: &str) -> Expr {
        Expr::Reg(name.to_string())
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn min(self, rhs: Expr) -> Expr {
        Expr::Min(Box::new(self), Box::new(rhs))
    }
}

/// Comparison operator used in guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn apply(self, lhs: u128, rhs: u128) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

/// Boolean guard over input ports and registers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Guard {
    /// Always true; the rendered label is `*`.
    Always,
    /// Tests a 1-bit input port against 1 (`name`) or 0 (`!name`).
    InputBit { port: String, expect_high: bool },
    /// Compares two expressions.
    Cmp { lhs: Expr, op: CmpOp, rhs: Expr },
    /// Conjunction; true when every conjunct is true.
    All(Vec<Guard>),
}

impl Guard {
    pub fn always() -> Guard {
        Guard::Always
    }

    pub fn input_high(port: &str) -> Guard {
        Guard::InputBit {
            port: port.to_string(),
            expect_high: true,
        }
    }

    pub fn input_low(port: &str) -> Guard {
        Guard::InputBit {
            port: port.to_string(),
            expect_high: false,
        }
    }

    pub fn cmp(lhs: Expr, op: CmpOp, rhs: Expr) -> Guard {
        Guard::Cmp { lhs, op, rhs }
    }

    pub fn all<I: IntoIterator<Item = Guard>>(guards: I) -> Guard {
        Guard::All(guards.into_iter().collect())
    }
}

/// Compiled expression: names resolved to port/register indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CExpr {
    Const(u64),
    Input(usize),
    Reg(usize),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Min(Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    /// Evaluates over concrete input and register values. Arithmetic is
    /// carried out in `u128` so intermediate sums of 64-bit operands cannot
    /// wrap; the caller checks the final value against the target width.
    pub(crate) fn eval(&self, inputs: &[u64], regs: &[u64]) -> u128 {
        match self {
            CExpr::Const(v) => *v as u128,
            CExpr::Input(i) => inputs[*i] as u128,
            CExpr::Reg(r) => regs[*r] as u128,
            CExpr::Add(a, b) => a.eval(inputs, regs).saturating_add(b.eval(inputs, regs)),
            CExpr::Sub(a, b) => a.eval(inputs, regs).saturating_sub(b.eval(inputs, regs)),
            CExpr::Mul(a, b) => a.eval(inputs, regs).saturating_mul(b.eval(inputs, regs)),
            CExpr::Min(a, b) => a.eval(inputs, regs).min(b.eval(inputs, regs)),
        }
    }

    pub(crate) fn reads_input(&self) -> bool {
        match self {
            CExpr::Const(_) | CExpr::Reg(_) => false,
            CExpr::Input(_) => true,
            CExpr::Add(a, b) | CExpr::Sub(a, b) | CExpr::Mul(a, b) | CExpr::Min(a, b) => {
                a.reads_input() || b.reads_input()
            }
        }
    }

    pub(crate) fn reads_reg(&self) -> bool {
        match self {
            CExpr::Const(_) | CExpr::Input(_) => false,
            CExpr::Reg(_) => true,
            CExpr::Add(a, b) | CExpr::Sub(a, b) | CExpr::Mul(a, b) | CExpr::Min(a, b) => {
                a.reads_reg() || b.reads_reg()
            }
        }
    }

    pub(crate) fn render(&self, input_names: &[String], reg_names: &[String]) -> String {
        match self {
            CExpr::Const(v) => v.to_string(),
            CExpr::Input(i) => input_names[*i].clone(),
            CExpr::Reg(r) => reg_names[*r].clone(),
            CExpr::Add(a, b) => format!(
                "{} + {}",
                a.render_atom(input_names, reg_names),
                b.render_atom(input_names, reg_names)
            ),
            CExpr::Sub(a, b) => format!(
                "{} - {}",
                a.render_atom(input_names, reg_names),
                b.render_atom(input_names, reg_names)
            ),
            CExpr::Mul(a, b) => format!(
                "{} * {}",
                a.render_atom(input_names, reg_names),
                b.render_atom(input_names, reg_names)
            ),
            CExpr::Min(a, b) => format!(
                "min({}, {})",
                a.render(input_names, reg_names),
                b.render(input_names, reg_names)
            ),
        }
    }

    fn render_atom(&self, input_names: &[String], reg_names: &[String]) -> String {
        match self {
            CExpr::Const(_) | CExpr::Input(_) | CExpr::Reg(_) | CExpr::Min(..) => {
                self.render(input_names, reg_names)
            }
            _ => format!("({})", self.render(input_names, reg_names)),
        }
    }
}

/// Compiled guard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CGuard {
    Always,
    InputBit { port: usize, expect_high: bool },
    Cmp { lhs: CExpr, op: CmpOp, rhs: CExpr },
    All(Vec<CGuard>),
}

/// Three-valued truth for symbolic reachability, where register contents
/// are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Truth {
    True,
    False,
    Unknown,
}

impl CGuard {
    pub(crate) fn eval(&self, inputs: &[u64], regs: &[u64]) -> bool {
        match self {
            CGuard::Always => true,
            CGuard::InputBit { port, expect_high } => (inputs[*port] != 0) == *expect_high,
            CGuard::Cmp { lhs, op, rhs } => op.apply(lhs.eval(inputs, regs), rhs.eval(inputs, regs)),
            CGuard::All(gs) => gs.iter().all(|g| g.eval(inputs, regs)),
        }
    }

    /// Evaluates with concrete inputs but unknown register contents.
    pub(crate) fn eval_symbolic(&self, inputs: &[u64]) -> Truth {
        match self {
            CGuard::Always => Truth::True,
            CGuard::InputBit { port, expect_high } => {
                if (inputs[*port] != 0) == *expect_high {
                    Truth::True
                } else {
                    Truth::False
                }
            }
            CGuard::Cmp { lhs, op, rhs } => {
                if lhs.reads_reg() || rhs.reads_reg() {
                    Truth::Unknown
                } else {
                    if op.apply(lhs.eval(inputs, &[]), rhs.eval(inputs, &[])) {
                        Truth::True
                    } else {
                        Truth::False
                    }
                }
            }
            CGuard::All(gs) => {
                let mut result = Truth::True;
                for g in gs {
                    match g.eval_symbolic(inputs) {
                        Truth::False => return Truth::False,
                        Truth::Unknown => result = Truth::Unknown,
                        Truth::True => {}
                    }
                }
                result
            }
        }
    }

    pub(crate) fn references_port(&self, port: usize) -> bool {
        fn expr_refs(e: &CExpr, port: usize) -> bool {
            match e {
                CExpr::Input(i) => *i == port,
                CExpr::Const(_) | CExpr::Reg(_) => false,
                CExpr::Add(a, b) | CExpr::Sub(a, b) | CExpr::Mul(a, b) | CExpr::Min(a, b) => {
                    expr_refs(a, port) || expr_refs(b, port)
                }
            }
        }
        match self {
            CGuard::Always => false,
            CGuard::InputBit { port: p, .. } => *p == port,
            CGuard::Cmp { lhs, rhs, .. } => expr_refs(lhs, port) || expr_refs(rhs, port),
            CGuard::All(gs) => gs.iter().any(|g| g.references_port(port)),
        }
    }

    pub(crate) fn render(&self, input_names: &[String], reg_names: &[String]) -> String {
        match self {
            CGuard::Always => "*".to_string(),
            CGuard::InputBit { port, expect_high } => {
                if *expect_high {
                    input_names[*port].clone()
                } else {
                    format!("!{}", input_names[*port])
                }
            }
            CGuard::Cmp { lhs, op, rhs } => format!(
                "{} {} {}",
                lhs.render(input_names, reg_names),
                op,
                rhs.render(input_names, reg_names)
            ),
            CGuard::All(gs) => gs
                .iter()
                .map(|g| g.render(input_names, reg_names))
                .collect::<Vec<_>>()
                .join(" & "),
        }
    }
}
