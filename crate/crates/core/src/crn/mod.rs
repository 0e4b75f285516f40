//! The intermediate representation: dual-rail chemical reaction networks.
//!
//! [`compile_dual_rail`] lowers a validated [`BlockDiagram`] into the three
//! elementary reaction kinds (catalysis, degradation, annihilation), with
//! every signal realized as a pair of species — a plus rail and a minus rail
//! whose concentration difference carries the signed value. Negative terms
//! are realized by exactly one construction: crossed-rail catalysis, where a
//! catalyst on one rail produces the opposite rail of its target.
//!
//! [`mass_action_field`] derives the closed-form dynamics
//! `ẋ = Ax + Br − η(Px)∘x`, and [`structure::extract_structure`] refines the
//! linear part into its rail partition and rotated coordinates.

pub mod structure;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::frontend::{BlockDiagram, RatePair, Role, Source, ValidationError};
use crate::linalg::Mat;

/// Which of the two rails of a base species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rail {
    Plus,
    Minus,
}

impl Rail {
    pub const BOTH: [Rail; 2] = [Rail::Plus, Rail::Minus];

    pub fn opposite(self) -> Rail {
        match self {
            Rail::Plus => Rail::Minus,
            Rail::Minus => Rail::Plus,
        }
    }

    /// Suffix used in species names: `X1p`, `X1m`.
    pub fn suffix(self) -> &'static str {
        match self {
            Rail::Plus => "p",
            Rail::Minus => "m",
        }
    }

    /// Sign used in rate labels: `gamma2+`, `gamma2-`.
    pub fn sign(self) -> &'static str {
        match self {
            Rail::Plus => "+",
            Rail::Minus => "-",
        }
    }

    fn pick(self, pair: &RatePair) -> f64 {
        match self {
            Rail::Plus => pair.plus,
            Rail::Minus => pair.minus,
        }
    }
}

/// One dual-rail signal: two species sharing a base name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseSpecies {
    /// Positional name, `X1`, `X2`, … in diagram order.
    pub name: String,
    /// The block whose output signal this is.
    pub block_id: String,
}

/// What drives a catalysis reaction: a state species or the external
/// reference signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Catalyst {
    Species { base: usize, rail: Rail },
    Reference { rail: Rail },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionKind {
    /// catalyst → catalyst + product (rate 1/s)
    Catalysis { catalyst: Catalyst, product: usize, product_rail: Rail },
    /// species → ∅ (rate 1/s)
    Degradation { base: usize, rail: Rail },
    /// base⁺ + base⁻ → ∅ (rate 1/(nM·s))
    Annihilation { base: usize },
}

/// One elementary reaction with its addressable rate label.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// Stable symbolic name: rate symbol plus the catalyst/species rail sign
    /// (`gamma2+`), or `eta.<base>` for annihilations.
    pub label: String,
    pub kind: ReactionKind,
    pub rate: f64,
}

/// A compiled dual-rail network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Crn {
    pub name: String,
    /// Base species in state order; rail pairing is implicit in the indexing.
    pub bases: Vec<BaseSpecies>,
    /// Name of the external reference signal, if the design has one.
    pub reference: Option<String>,
    /// Base index of the designated output signal y.
    pub output: usize,
    pub reactions: Vec<Reaction>,
    /// Annihilation rate η in 1/(nM·s) (converted from 1/(M·s) at compile).
    pub eta: f64,
}

impl Crn {
    /// Number of base species N.
    pub fn n_bases(&self) -> usize {
        self.bases.len()
    }

    /// State dimension 2N.
    pub fn dim(&self) -> usize {
        2 * self.bases.len()
    }

    /// Index into the state vector: all plus rails first, then all minus
    /// rails, in base order.
    pub fn state_index(&self, base: usize, rail: Rail) -> usize {
        match rail {
            Rail::Plus => base,
            Rail::Minus => base + self.bases.len(),
        }
    }

    pub fn species_name(&self, base: usize, rail: Rail) -> String {
        format!("{}{}", self.bases[base].name, rail.suffix())
    }

    /// All species names in state order.
    pub fn species_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for rail in Rail::BOTH {
            for b in 0..self.bases.len() {
                names.push(self.species_name(b, rail));
            }
        }
        names
    }

    /// Base index of a named base species (`X3`).
    pub fn base_index(&self, name: &str) -> Option<usize> {
        self.bases.iter().position(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileError {
    /// The diagram failed validation; compilation needs a well-formed input.
    Invalid(ValidationError),
    /// Reserved for block kinds the lowering does not understand; every kind
    /// currently defined compiles.
    UnsupportedBlock { block: String, kind: String },
}

impl core::fmt::Display for CompileError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CompileError::Invalid(e) => write!(f, "{e}"),
            CompileError::UnsupportedBlock { block, kind } => {
                write!(f, "block `{block}` has unsupported kind `{kind}`")
            }
        }
    }
}

impl core::error::Error for CompileError {}

/// Errors from [`apply_perturbation`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerturbationError {
    #[error("no rate named `{0}` in this network")]
    UnknownRate(String),
    #[error("factor for `{0}` must be positive and finite on both rails")]
    InvalidFactor(String),
    #[error("the annihilation rate is rail-free; its factor must be symmetric")]
    AsymmetricEta,
}

/// Lowers a validated diagram to its dual-rail CRN.
///
/// Per wire, one catalysis reaction per rail (crossed for minus ports); per
/// block with a decay role, one degradation per rail; one annihilation per
/// base species. Rail-split rates select by the catalyst's rail (for
/// degradation, the decaying species' rail).
pub fn compile_dual_rail(diagram: &BlockDiagram) -> Result<Crn, CompileError> {
    diagram.validate().map_err(CompileError::Invalid)?;

    let bases: Vec<BaseSpecies> = diagram
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| BaseSpecies { name: format!("X{}", i + 1), block_id: b.id.clone() })
        .collect();
    let index_of = |id: &str| diagram.blocks.iter().position(|b| b.id == id).unwrap();

    let mut reactions: Vec<Reaction> = Vec::new();

    // Catalysis: one reaction per wire per rail.
    for wire in &diagram.wires {
        let target = diagram.block(&wire.to_block).unwrap();
        let pair = target.rates[&wire.to_port];
        let symbol = target.symbol(wire.to_port);
        let crossed = wire.to_port == Role::Minus;
        let product = index_of(&wire.to_block);
        for rail in Rail::BOTH {
            let catalyst = match &wire.from {
                Source::Reference(_) => Catalyst::Reference { rail },
                Source::Block(id) => Catalyst::Species { base: index_of(id), rail },
            };
            let product_rail = if crossed { rail.opposite() } else { rail };
            reactions.push(Reaction {
                label: format!("{symbol}{}", rail.sign()),
                kind: ReactionKind::Catalysis { catalyst, product, product_rail },
                rate: rail.pick(&pair),
            });
        }
    }

    // Degradation: one per rail for every block with a decay role.
    for (i, block) in diagram.blocks.iter().enumerate() {
        if let Some(pair) = block.rates.get(&Role::SelfDecay) {
            let symbol = block.symbol(Role::SelfDecay);
            for rail in Rail::BOTH {
                reactions.push(Reaction {
                    label: format!("{symbol}{}", rail.sign()),
                    kind: ReactionKind::Degradation { base: i, rail },
                    rate: rail.pick(pair),
                });
            }
        }
    }

    // Exactly one annihilation per base pair. Unit conversion happens here:
    // concentrations are held in nM, so 1/(M·s) shrinks by 1e9.
    let eta = diagram.annihilation_rate_per_molar * 1.0e-9;
    for (i, base) in bases.iter().enumerate() {
        reactions.push(Reaction {
            label: format!("eta.{}", base.name),
            kind: ReactionKind::Annihilation { base: i },
            rate: eta,
        });
    }

    Ok(Crn {
        name: diagram.name.clone(),
        bases,
        reference: diagram.references.first().cloned(),
        output: index_of(&diagram.output),
        reactions,
        eta,
    })
}

/// Rescales named rates; `factors` maps a rate symbol to per-rail
/// multipliers. The key `eta` addresses the annihilation rate (its factor
/// must be symmetric since η carries no rail).
pub fn apply_perturbation(
    crn: &Crn,
    factors: &BTreeMap<String, RatePair>,
) -> Result<Crn, PerturbationError> {
    let mut out = crn.clone();
    for (symbol, factor) in factors {
        if !factor.is_valid() {
            return Err(PerturbationError::InvalidFactor(symbol.clone()));
        }
        if symbol == "eta" {
            if !factor.is_symmetric() {
                return Err(PerturbationError::AsymmetricEta);
            }
            out.eta *= factor.plus;
            for r in out.reactions.iter_mut() {
                if matches!(r.kind, ReactionKind::Annihilation { .. }) {
                    r.rate *= factor.plus;
                }
            }
            continue;
        }
        let plus_label = format!("{symbol}+");
        let minus_label = format!("{symbol}-");
        let mut hit = false;
        for r in out.reactions.iter_mut() {
            if r.label == plus_label {
                r.rate *= factor.plus;
                hit = true;
            } else if r.label == minus_label {
                r.rate *= factor.minus;
                hit = true;
            }
        }
        if !hit {
            return Err(PerturbationError::UnknownRate(symbol.clone()));
        }
    }
    Ok(out)
}

/// True iff the catalysis dependency graph over base species is acyclic —
/// the network is a pure cascade with no feedback.
pub fn is_cascaded(crn: &Crn) -> bool {
    let n = crn.n_bases();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &crn.reactions {
        if let ReactionKind::Catalysis {
            catalyst: Catalyst::Species { base, .. }, product, ..
        } = r.kind
        {
            if !adj[base].contains(&product) {
                adj[base].push(product);
            }
        }
    }
    // Depth-first cycle detection over the base graph.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if marks[start] != Mark::New {
            continue;
        }
        marks[start] = Mark::Active;
        stack.push((start, 0));
        while let Some((node, edge)) = stack.pop() {
            if edge < adj[node].len() {
                stack.push((node, edge + 1));
                let next = adj[node][edge];
                match marks[next] {
                    Mark::Active => return false,
                    Mark::New => {
                        marks[next] = Mark::Active;
                        stack.push((next, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node] = Mark::Done;
            }
        }
    }
    true
}

/// The closed-form mass-action dynamics of a compiled network:
/// `ẋ = Ax + Br − η(Px)∘x` over the plus-then-minus state ordering.
#[derive(Debug, Clone)]
pub struct CrnField {
    /// Linear state map, 2N×2N, Metzler by construction.
    pub a: Mat,
    /// Forcing map, 2N×2 (columns: reference plus rail, minus rail).
    pub b: Mat,
    /// Annihilation rate in 1/(nM·s).
    pub eta: f64,
    n: usize,
}

/// Assembles the linear pieces (A, B) from the reaction list. Catalysis
/// rates land strictly off the diagonal (or in B for reference catalysts);
/// degradation rates accumulate negatively on the diagonal.
pub(crate) fn assemble_linear(crn: &Crn) -> (Mat, Mat) {
    let dim = crn.dim();
    let mut a = Mat::zeros(dim, dim);
    let mut b = Mat::zeros(dim, 2);
    for r in &crn.reactions {
        match r.kind {
            ReactionKind::Catalysis { catalyst, product, product_rail } => {
                let row = crn.state_index(product, product_rail);
                match catalyst {
                    Catalyst::Species { base, rail } => {
                        let col = crn.state_index(base, rail);
                        a[(row, col)] += r.rate;
                    }
                    Catalyst::Reference { rail } => {
                        let col = if rail == Rail::Plus { 0 } else { 1 };
                        b[(row, col)] += r.rate;
                    }
                }
            }
            ReactionKind::Degradation { base, rail } => {
                let i = crn.state_index(base, rail);
                a[(i, i)] -= r.rate;
            }
            ReactionKind::Annihilation { .. } => {}
        }
    }
    (a, b)
}

/// Builds the vector-field evaluator with its closed-form pieces exposed.
pub fn mass_action_field(crn: &Crn) -> CrnField {
    let (a, b) = assemble_linear(crn);
    CrnField { a, b, eta: crn.eta, n: crn.n_bases() }
}

impl CrnField {
    /// State dimension 2N.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Rail-swap partner index: (Px)_i = x_{P(i)}.
    #[inline]
    fn swap(&self, i: usize) -> usize {
        if i < self.n {
            i + self.n
        } else {
            i - self.n
        }
    }

    /// Evaluates ẋ = Ax + Br − η(Px)∘x into `dxdt`.
    pub fn eval_into(&self, r: &[f64; 2], x: &[f64], dxdt: &mut [f64]) {
        let dim = self.dim();
        debug_assert_eq!(x.len(), dim);
        debug_assert_eq!(dxdt.len(), dim);
        for i in 0..dim {
            let mut acc = self.b[(i, 0)] * r[0] + self.b[(i, 1)] * r[1];
            for j in 0..dim {
                acc += self.a[(i, j)] * x[j];
            }
            acc -= self.eta * x[self.swap(i)] * x[i];
            dxdt[i] = acc;
        }
    }

    /// Jacobian ∂ẋ/∂x = A − η(D{Px} + D{x}P) into `jac`.
    pub fn jacobian_into(&self, x: &[f64], jac: &mut Mat) {
        let dim = self.dim();
        debug_assert_eq!(jac.rows(), dim);
        for i in 0..dim {
            for j in 0..dim {
                jac[(i, j)] = self.a[(i, j)];
            }
            jac[(i, i)] -= self.eta * x[self.swap(i)];
            jac[(i, self.swap(i))] -= self.eta * x[i];
        }
    }
}

/// Mass-action flux of every reaction at state `x` under reference `r`, in
/// reaction-list order (nM/s). Catalysis fires at rate·[catalyst] (or
/// rate·r for reference catalysts), degradation at rate·[species],
/// annihilation at rate·[plus]·[minus].
pub fn reaction_fluxes(crn: &Crn, r: &[f64; 2], x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), crn.dim());
    crn.reactions
        .iter()
        .map(|reaction| {
            let occupancy = match reaction.kind {
                ReactionKind::Catalysis { catalyst, .. } => match catalyst {
                    Catalyst::Species { base, rail } => x[crn.state_index(base, rail)],
                    Catalyst::Reference { rail } => match rail {
                        Rail::Plus => r[0],
                        Rail::Minus => r[1],
                    },
                },
                ReactionKind::Degradation { base, rail } => x[crn.state_index(base, rail)],
                ReactionKind::Annihilation { base } => {
                    x[crn.state_index(base, Rail::Plus)] * x[crn.state_index(base, Rail::Minus)]
                }
            };
            reaction.rate * occupancy
        })
        .collect()
}

/// Renders the line-oriented export form, one reaction per line, e.g.
/// `X5p + X5m ->{5e-4} 0`.
pub fn export_reactions(crn: &Crn) -> String {
    let mut out = String::new();
    for r in &crn.reactions {
        let line = match r.kind {
            ReactionKind::Catalysis { catalyst, product, product_rail } => {
                let cat = match catalyst {
                    Catalyst::Species { base, rail } => crn.species_name(base, rail),
                    Catalyst::Reference { rail } => {
                        let name = crn.reference.as_deref().unwrap_or("r");
                        format!("{name}{}", rail.suffix())
                    }
                };
                let prod = crn.species_name(product, product_rail);
                format!("{cat} ->{{{}}} {cat} + {prod}", fmt_rate(r.rate))
            }
            ReactionKind::Degradation { base, rail } => {
                format!("{} ->{{{}}} 0", crn.species_name(base, rail), fmt_rate(r.rate))
            }
            ReactionKind::Annihilation { base } => format!(
                "{} + {} ->{{{}}} 0",
                crn.species_name(base, Rail::Plus),
                crn.species_name(base, Rail::Minus),
                fmt_rate(r.rate)
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Compact, locale-free rate formatting for the export form: `5e-4`, `0.004`.
pub(crate) fn fmt_rate(rate: f64) -> String {
    // Shortest of plain and exponential renderings that round-trips.
    let plain = format!("{rate}");
    let exp = format!("{rate:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}
