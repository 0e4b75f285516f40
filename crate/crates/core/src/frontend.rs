//! Source language for controller designs: block diagrams over five
//! primitive block kinds, wired to each other and to external reference
//! signals, with per-rail rate parameters.
//!
//! A diagram is pure data; [`BlockDiagram::validate`] checks every structural
//! invariant at once and reports all violations together, so a malformed
//! design document surfaces as one complete diagnostic list rather than a
//! fix-one-rerun loop.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::fmt;

/// The five primitive block kinds.
///
/// Every kind realizes a first-order rate law for its output signal: inputs
/// act catalytically (each wired port contributes `rate · input`), and kinds
/// with a `self` rate add first-order decay of the output. A subtraction
/// block's `minus` input enters with negative sign (realized downstream by
/// crossed-rail catalysis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockKind {
    /// out' = plus·u − minus·v − self·out
    Subtraction,
    /// out' = in·u − self·out, with static gain in/self
    Gain,
    /// out' = in·u (no decay)
    Integrator,
    /// out' = in1·u + in2·v − self·out
    Summation,
    /// out' = in·u − self·out, interpreted as the dynamic element in/(s+self)
    FirstOrderPlant,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Subtraction => "subtraction",
            BlockKind::Gain => "gain",
            BlockKind::Integrator => "integrator",
            BlockKind::Summation => "summation",
            BlockKind::FirstOrderPlant => "first_order_plant",
        }
    }

    /// All rate roles this kind understands (input ports plus `self`).
    pub fn roles(self) -> &'static [Role] {
        match self {
            BlockKind::Subtraction => &[Role::Plus, Role::Minus, Role::SelfDecay],
            BlockKind::Gain | BlockKind::FirstOrderPlant => &[Role::In, Role::SelfDecay],
            BlockKind::Integrator => &[Role::In],
            BlockKind::Summation => &[Role::In1, Role::In2, Role::SelfDecay],
        }
    }

    /// The subset of roles that are wireable input ports.
    pub fn input_ports(self) -> &'static [Role] {
        match self {
            BlockKind::Subtraction => &[Role::Plus, Role::Minus],
            BlockKind::Gain | BlockKind::FirstOrderPlant => &[Role::In],
            BlockKind::Integrator => &[Role::In],
            BlockKind::Summation => &[Role::In1, Role::In2],
        }
    }
}

/// Rate roles; the input-port roles double as wiring targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Plus,
    Minus,
    In,
    In1,
    In2,
    /// First-order decay of the block's own output (not wireable).
    SelfDecay,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Plus => "plus",
            Role::Minus => "minus",
            Role::In => "in",
            Role::In1 => "in1",
            Role::In2 => "in2",
            Role::SelfDecay => "self",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "plus" => Role::Plus,
            "minus" => Role::Minus,
            "in" => Role::In,
            "in1" => Role::In1,
            "in2" => Role::In2,
            "self" => Role::SelfDecay,
            _ => return None,
        })
    }

    /// Input ports may be unwired only if `optional` (the subtraction minus
    /// port, so open-loop variants of a feedback design stay valid).
    pub fn is_optional_port(self) -> bool {
        matches!(self, Role::Minus)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rate constant split over the two rails.
///
/// `plus` applies when the *catalyst* (for catalysis) or the degrading
/// species (for decay) sits on the plus rail, `minus` when on the minus rail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub plus: f64,
    pub minus: f64,
}

impl RatePair {
    pub const fn symmetric(v: f64) -> Self {
        RatePair { plus: v, minus: v }
    }

    pub const fn split(plus: f64, minus: f64) -> Self {
        RatePair { plus, minus }
    }

    pub fn is_symmetric(&self) -> bool {
        self.plus == self.minus
    }

    pub fn is_valid(&self) -> bool {
        self.plus.is_finite() && self.minus.is_finite() && self.plus > 0.0 && self.minus > 0.0
    }

    /// Componentwise scaling, used for rate perturbations.
    pub fn scaled_by(&self, factor: &RatePair) -> RatePair {
        RatePair { plus: self.plus * factor.plus, minus: self.minus * factor.minus }
    }
}

/// One block instance: a kind, its per-role rates, and the symbolic names
/// those rates are addressable by (for perturbation and reporting).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: String,
    pub kind: BlockKind,
    pub rates: BTreeMap<Role, RatePair>,
    /// Symbol per role; defaults to `"<id>.<role>"` when not set explicitly.
    pub symbols: BTreeMap<Role, String>,
}

impl Block {
    pub fn new(id: &str, kind: BlockKind) -> Block {
        Block { id: id.to_string(), kind, rates: BTreeMap::new(), symbols: BTreeMap::new() }
    }

    /// Adds a rate under its default symbol `"<id>.<role>"`.
    pub fn with_rate(mut self, role: Role, rate: RatePair) -> Block {
        self.rates.insert(role, rate);
        self
    }

    /// Adds a rate under an explicit symbol.
    pub fn with_named_rate(mut self, role: Role, symbol: &str, rate: RatePair) -> Block {
        self.rates.insert(role, rate);
        self.symbols.insert(role, symbol.to_string());
        self
    }

    /// The symbol a role's rate is addressed by.
    pub fn symbol(&self, role: Role) -> String {
        self.symbols
            .get(&role)
            .cloned()
            .unwrap_or_else(|| format!("{}.{}", self.id, role.as_str()))
    }
}

/// Where a wire originates: a named external reference or another block's
/// output signal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Reference(String),
    Block(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Reference(name) => write!(f, "{name}"),
            Source::Block(id) => write!(f, "{id}"),
        }
    }
}

/// A directed connection into one input port.
#[derive(Debug, Clone, PartialEq)]
pub struct Wire {
    pub from: Source,
    pub to_block: String,
    pub to_port: Role,
}

impl Wire {
    pub fn new(from: Source, to_block: &str, to_port: Role) -> Wire {
        Wire { from, to_block: to_block.to_string(), to_port }
    }

    pub fn describe(&self) -> String {
        format!("{} -> {}.{}", self.from, self.to_block, self.to_port)
    }
}

/// A complete controller design.
///
/// Block order is significant: it fixes the base-species ordering of the
/// compiled network, so matrix layouts are reproducible across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagram {
    pub name: String,
    /// External forcing signals; at most one is supported.
    pub references: Vec<String>,
    pub blocks: Vec<Block>,
    pub wires: Vec<Wire>,
    /// Block id whose output is the designated measurement y.
    pub output: String,
    /// Annihilation rate η in 1/(M·s); converted to the internal
    /// concentration unit once, at compile time.
    pub annihilation_rate_per_molar: f64,
}

/// One validation finding, tied to the entity it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Identifier of the offending entity (block id, wire description, …).
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Diagnostic {
        Diagnostic { subject: subject.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Invariant breach; lists every violation found, not just the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "design is invalid ({} problem(s))", self.diagnostics.len())?;
        for d in &self.diagnostics {
            write!(f, "\n  - {d}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationError {}

impl BlockDiagram {
    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// Checks every structural invariant; returns all violations together.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut diags: Vec<Diagnostic> = Vec::new();

        if self.blocks.is_empty() {
            diags.push(Diagnostic::new(self.name.clone(), "no blocks and no output designated"));
        }
        if self.references.len() > 1 {
            diags.push(Diagnostic::new(
                self.references[1].clone(),
                "multiple reference signals are not supported (at most one)",
            ));
        }
        if !(self.annihilation_rate_per_molar.is_finite() && self.annihilation_rate_per_molar > 0.0)
        {
            diags.push(Diagnostic::new(
                self.name.clone(),
                format!(
                    "annihilation rate must be positive and finite, got {}",
                    self.annihilation_rate_per_molar
                ),
            ));
        }

        // Identifier uniqueness, including block/reference collisions.
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for b in &self.blocks {
            if b.id.is_empty() {
                diags.push(Diagnostic::new("(unnamed)", "block id must be nonempty"));
            }
            if !seen.insert(&b.id) {
                diags.push(Diagnostic::new(b.id.clone(), "duplicate block id"));
            }
        }
        for r in &self.references {
            if !seen.insert(r) {
                diags.push(Diagnostic::new(
                    r.clone(),
                    "reference name collides with a block id or another reference",
                ));
            }
        }

        // Output designation.
        if !self.blocks.is_empty() && self.block(&self.output).is_none() {
            diags.push(Diagnostic::new(
                self.output.clone(),
                "designated output does not name a block",
            ));
        }

        // Rates: every role present and positive; symbols unique.
        let mut symbols: BTreeMap<String, String> = BTreeMap::new();
        for b in &self.blocks {
            for &role in b.kind.roles() {
                match b.rates.get(&role) {
                    None => {
                        // Optional unwired ports may omit the rate; checked
                        // against wiring below.
                        if !role.is_optional_port() {
                            diags.push(Diagnostic::new(
                                b.id.clone(),
                                format!("missing rate for role `{role}`"),
                            ));
                        }
                    }
                    Some(pair) if !pair.is_valid() => {
                        diags.push(Diagnostic::new(
                            b.id.clone(),
                            format!(
                                "rate `{role}` must be positive and finite on both rails, got ({}, {})",
                                pair.plus, pair.minus
                            ),
                        ));
                    }
                    Some(_) => {}
                }
            }
            for (&role, _) in &b.rates {
                if !b.kind.roles().contains(&role) {
                    diags.push(Diagnostic::new(
                        b.id.clone(),
                        format!("rate `{role}` is not a role of kind `{}`", b.kind.name()),
                    ));
                }
                let sym = b.symbol(role);
                if let Some(prev) = symbols.insert(sym.clone(), format!("{}.{role}", b.id)) {
                    diags.push(Diagnostic::new(
                        format!("{}.{role}", b.id),
                        format!("rate symbol `{sym}` already used by {prev}"),
                    ));
                }
            }
        }

        // Wiring: sources exist, targets exist and are input ports, each
        // port fed at most once.
        let mut fed: BTreeMap<(String, Role), usize> = BTreeMap::new();
        for w in &self.wires {
            match &w.from {
                Source::Reference(name) if !self.references.iter().any(|r| r == name) => {
                    diags.push(Diagnostic::new(
                        w.describe(),
                        format!("wire source references unknown signal `{name}`"),
                    ));
                }
                Source::Block(id) if self.block(id).is_none() => {
                    diags.push(Diagnostic::new(
                        w.describe(),
                        format!("wire source references unknown block `{id}`"),
                    ));
                }
                _ => {}
            }
            if matches!(&w.from, Source::Block(id) if *id == w.to_block) {
                diags.push(Diagnostic::new(
                    w.describe(),
                    "wire connects a block to itself; self-catalysis is not representable",
                ));
            }
            match self.block(&w.to_block) {
                None => {
                    diags.push(Diagnostic::new(
                        w.describe(),
                        format!("wire target references unknown block `{}`", w.to_block),
                    ));
                }
                Some(b) => {
                    if !b.kind.input_ports().contains(&w.to_port) {
                        diags.push(Diagnostic::new(
                            w.describe(),
                            format!(
                                "`{}` is not an input port of kind `{}`",
                                w.to_port,
                                b.kind.name()
                            ),
                        ));
                    }
                    *fed.entry((w.to_block.clone(), w.to_port)).or_insert(0) += 1;
                }
            }
        }
        for ((block, port), count) in &fed {
            if *count > 1 {
                diags.push(Diagnostic::new(
                    format!("{block}.{port}"),
                    format!("input port fed by {count} wires; exactly one source allowed"),
                ));
            }
        }

        // Dangling ports: every mandatory input port wired; wired ports must
        // carry a rate (covers optional minus ports that are actually used).
        for b in &self.blocks {
            for &port in b.kind.input_ports() {
                let wired = fed.contains_key(&(b.id.clone(), port));
                if !wired && !port.is_optional_port() {
                    diags.push(Diagnostic::new(
                        b.id.clone(),
                        format!("input port `{port}` is unwired"),
                    ));
                }
                if wired && !b.rates.contains_key(&port) {
                    diags.push(Diagnostic::new(
                        b.id.clone(),
                        format!("missing rate for role `{port}`"),
                    ));
                }
            }
        }

        if diags.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { diagnostics: diags })
        }
    }

    /// True when every stored rate is rail-symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.blocks.iter().all(|b| b.rates.values().all(RatePair::is_symmetric))
    }

    /// The open-loop variant: drops every wire into a subtraction block's
    /// minus port. The minus rates stay stored but become inert.
    pub fn without_feedback(&self) -> BlockDiagram {
        let mut open = self.clone();
        open.wires.retain(|w| {
            !(w.to_port == Role::Minus
                && self.block(&w.to_block).map(|b| b.kind) == Some(BlockKind::Subtraction))
        });
        open
    }
}

/// The full rate set of the worked proportional-integral feedback loop, with
/// every constant split per rail.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub gamma1: RatePair,
    pub gamma2: RatePair,
    pub gamma3: RatePair,
    pub gamma4: RatePair,
    pub gamma5: RatePair,
    pub gamma6: RatePair,
    pub gamma7: RatePair,
    pub gamma8: RatePair,
    pub k0: RatePair,
    pub k1: RatePair,
    pub k2: RatePair,
    /// η in 1/(M·s).
    pub annihilation_rate_per_molar: f64,
}

impl RateTable {
    /// Nominal, rail-symmetric design point (rates in 1/s).
    pub fn nominal() -> RateTable {
        RateTable {
            gamma1: RatePair::symmetric(0.004),
            gamma2: RatePair::symmetric(0.004),
            gamma3: RatePair::symmetric(0.004),
            gamma4: RatePair::symmetric(4.0e-6),
            gamma5: RatePair::symmetric(4.0e-6),
            gamma6: RatePair::symmetric(0.008),
            gamma7: RatePair::symmetric(0.008),
            gamma8: RatePair::symmetric(0.008),
            k0: RatePair::symmetric(4.5e-4),
            k1: RatePair::symmetric(0.001),
            k2: RatePair::symmetric(0.001),
            annihilation_rate_per_molar: 5.0e5,
        }
    }

    /// Rail-asymmetric design point: each rate perturbed up to ±33% per
    /// rail, the worked example of a loop that loses its serial structure.
    pub fn asymmetric() -> RateTable {
        RateTable {
            gamma1: RatePair::symmetric(0.00528),
            gamma2: RatePair::symmetric(0.00528),
            gamma3: RatePair::symmetric(0.00272),
            gamma4: RatePair::split(2.72e-6, 5.28e-6),
            gamma5: RatePair::symmetric(5.28e-6),
            gamma6: RatePair::symmetric(0.01056),
            gamma7: RatePair::split(0.01056, 0.00544),
            gamma8: RatePair::symmetric(0.00544),
            k0: RatePair::symmetric(5.94e-4),
            k1: RatePair::symmetric(0.00132),
            k2: RatePair::split(0.00132, 6.8e-4),
            annihilation_rate_per_molar: 5.0e5,
        }
    }
}

/// The worked proportional-integral feedback loop.
///
/// Signal order (and thus state order): error, proportional, integral,
/// combine, plant. Reference `r` feeds the error block's plus port; the
/// plant output feeds its minus port, closing the loop.
pub fn pi_feedback_loop(rates: &RateTable) -> BlockDiagram {
    let blocks = alloc::vec![
        Block::new("error", BlockKind::Subtraction)
            .with_named_rate(Role::Plus, "gamma1", rates.gamma1)
            .with_named_rate(Role::Minus, "gamma2", rates.gamma2)
            .with_named_rate(Role::SelfDecay, "gamma3", rates.gamma3),
        Block::new("proportional", BlockKind::Gain)
            .with_named_rate(Role::In, "gamma4", rates.gamma4)
            .with_named_rate(Role::SelfDecay, "gamma5", rates.gamma5),
        Block::new("integral", BlockKind::Integrator).with_named_rate(Role::In, "k0", rates.k0),
        Block::new("combine", BlockKind::Summation)
            .with_named_rate(Role::In1, "gamma6", rates.gamma6)
            .with_named_rate(Role::In2, "gamma7", rates.gamma7)
            .with_named_rate(Role::SelfDecay, "gamma8", rates.gamma8),
        Block::new("plant", BlockKind::FirstOrderPlant)
            .with_named_rate(Role::In, "k1", rates.k1)
            .with_named_rate(Role::SelfDecay, "k2", rates.k2),
    ];
    let wires = alloc::vec![
        Wire::new(Source::Reference("r".into()), "error", Role::Plus),
        Wire::new(Source::Block("plant".into()), "error", Role::Minus),
        Wire::new(Source::Block("error".into()), "proportional", Role::In),
        Wire::new(Source::Block("error".into()), "integral", Role::In),
        Wire::new(Source::Block("proportional".into()), "combine", Role::In1),
        Wire::new(Source::Block("integral".into()), "combine", Role::In2),
        Wire::new(Source::Block("combine".into()), "plant", Role::In),
    ];
    BlockDiagram {
        name: "pi_feedback_loop".into(),
        references: alloc::vec!["r".into()],
        blocks,
        wires,
        output: "plant".into(),
        annihilation_rate_per_molar: rates.annihilation_rate_per_molar,
    }
}

/// Two-state negative feedback: x is driven by the reference and inhibited
/// by y, y follows x. `c2 = 0` degenerates to the open cascade (the feedback
/// wire and its rate are omitted instead of emitting a zero-rate reaction).
///
/// All rates must be positive; `c2` may also be zero.
pub fn two_state_loop(d1: f64, d2: f64, c1: f64, c2: f64) -> BlockDiagram {
    let mut x = Block::new("x", BlockKind::Subtraction)
        .with_named_rate(Role::Plus, "b1", RatePair::symmetric(1.0))
        .with_named_rate(Role::SelfDecay, "d1", RatePair::symmetric(d1));
    let mut wires = alloc::vec![
        Wire::new(Source::Reference("u".into()), "x", Role::Plus),
        Wire::new(Source::Block("x".into()), "y", Role::In),
    ];
    if c2 > 0.0 {
        x = x.with_named_rate(Role::Minus, "c2", RatePair::symmetric(c2));
        wires.push(Wire::new(Source::Block("y".into()), "x", Role::Minus));
    }
    let y = Block::new("y", BlockKind::Gain)
        .with_named_rate(Role::In, "c1", RatePair::symmetric(c1))
        .with_named_rate(Role::SelfDecay, "d2", RatePair::symmetric(d2));
    BlockDiagram {
        name: "two_state_loop".into(),
        references: alloc::vec!["u".into()],
        blocks: alloc::vec![x, y],
        wires,
        output: "y".into(),
        annihilation_rate_per_molar: 5.0e5,
    }
}
