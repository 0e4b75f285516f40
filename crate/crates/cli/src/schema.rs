//! On-disk design documents.
//!
//! A design file is a JSON tree with top-level keys `blocks`, `wires`,
//! `references`, `output` and `annihilation_rate_per_molar`. Unimolecular
//! rates are given in 1/s; the annihilation rate in 1/(M*s). A rate value is
//! either a single number (rail-symmetric) or a two-element array
//! `[plus, minus]`, optionally wrapped in `{"symbol": ..., "value": ...}` to
//! give the constant an addressable name. Wires are written
//! `{"from": "<source>", "to": "<block>.<port>"}`, where the source names
//! either a reference signal or another block's output.
//!
//! [`parse_document`] only converts the tree into a [`BlockDiagram`]; the
//! structural invariants (dangling wires, missing rates, duplicate ids) are
//! the diagram's own validation and are reported separately, so a caller can
//! distinguish "not a design file" from "a design with problems".

use std::collections::BTreeMap;

use dualrail_core::frontend::{Block, BlockDiagram, BlockKind, RatePair, Role, Source, Wire};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(
        "block `{block}`: unknown kind `{kind}` \
         (expected subtraction|gain|integrator|summation|first_order_plant)"
    )]
    UnknownKind { block: String, kind: String },
    #[error("block `{block}`: unknown rate role `{role}` (expected plus|minus|in|in1|in2|self)")]
    UnknownRole { block: String, role: String },
    #[error("wire {index}: target `{target}` must be written `<block>.<port>`")]
    BadWireTarget { index: usize, target: String },
    #[error("wire {index}: `{port}` is not a port name")]
    BadWirePort { index: usize, port: String },
}

/// Serialized form of a [`BlockDiagram`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub references: Vec<String>,
    pub blocks: Vec<BlockDoc>,
    pub wires: Vec<WireDoc>,
    pub output: String,
    pub annihilation_rate_per_molar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDoc {
    pub id: String,
    pub kind: String,
    pub rates: BTreeMap<String, RateDoc>,
}

/// A rate constant: bare value, or named via `{"symbol", "value"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateDoc {
    Bare(RateValue),
    Named {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symbol: Option<String>,
        value: RateValue,
    },
}

/// A number (rail-symmetric) or `[plus, minus]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Symmetric(f64),
    Split([f64; 2]),
}

impl RateValue {
    fn pair(self) -> RatePair {
        match self {
            RateValue::Symmetric(v) => RatePair::symmetric(v),
            RateValue::Split([p, m]) => RatePair::split(p, m),
        }
    }

    fn of(pair: RatePair) -> RateValue {
        if pair.is_symmetric() {
            RateValue::Symmetric(pair.plus)
        } else {
            RateValue::Split([pair.plus, pair.minus])
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireDoc {
    pub from: String,
    pub to: String,
}

fn kind_of(name: &str) -> Option<BlockKind> {
    Some(match name {
        "subtraction" => BlockKind::Subtraction,
        "gain" => BlockKind::Gain,
        "integrator" => BlockKind::Integrator,
        "summation" => BlockKind::Summation,
        "first_order_plant" => BlockKind::FirstOrderPlant,
        _ => return None,
    })
}

/// Parses a design document into a diagram. Call
/// [`BlockDiagram::validate`] afterwards for the structural invariants.
pub fn parse_document(text: &str) -> Result<BlockDiagram, SchemaError> {
    let doc: DesignDoc = serde_json::from_str(text)?;
    diagram_of(&doc)
}

pub fn diagram_of(doc: &DesignDoc) -> Result<BlockDiagram, SchemaError> {
    let mut blocks = Vec::with_capacity(doc.blocks.len());
    for b in &doc.blocks {
        let kind = kind_of(&b.kind).ok_or_else(|| SchemaError::UnknownKind {
            block: b.id.clone(),
            kind: b.kind.clone(),
        })?;
        let mut block = Block::new(&b.id, kind);
        for (role_name, rate) in &b.rates {
            let role = Role::parse(role_name).ok_or_else(|| SchemaError::UnknownRole {
                block: b.id.clone(),
                role: role_name.clone(),
            })?;
            block = match rate {
                RateDoc::Bare(v) => block.with_rate(role, v.pair()),
                RateDoc::Named { symbol: None, value } => block.with_rate(role, value.pair()),
                RateDoc::Named { symbol: Some(sym), value } => {
                    block.with_named_rate(role, sym, value.pair())
                }
            };
        }
        blocks.push(block);
    }

    let mut wires = Vec::with_capacity(doc.wires.len());
    for (index, w) in doc.wires.iter().enumerate() {
        let (to_block, port_name) = w.to.rsplit_once('.').ok_or_else(|| {
            SchemaError::BadWireTarget { index, target: w.to.clone() }
        })?;
        let to_port = Role::parse(port_name).ok_or_else(|| SchemaError::BadWirePort {
            index,
            port: port_name.to_string(),
        })?;
        let from = if doc.references.iter().any(|r| r == &w.from) {
            Source::Reference(w.from.clone())
        } else {
            Source::Block(w.from.clone())
        };
        wires.push(Wire::new(from, to_block, to_port));
    }

    Ok(BlockDiagram {
        name: doc.name.clone().unwrap_or_else(|| "design".to_string()),
        references: doc.references.clone(),
        blocks,
        wires,
        output: doc.output.clone(),
        annihilation_rate_per_molar: doc.annihilation_rate_per_molar,
    })
}

pub fn document_of(diagram: &BlockDiagram) -> DesignDoc {
    let blocks = diagram
        .blocks
        .iter()
        .map(|b| {
            let mut rates = BTreeMap::new();
            for (&role, &pair) in &b.rates {
                let value = RateValue::of(pair);
                let doc = match b.symbols.get(&role) {
                    Some(sym) => RateDoc::Named { symbol: Some(sym.clone()), value },
                    None => RateDoc::Bare(value),
                };
                rates.insert(role.as_str().to_string(), doc);
            }
            BlockDoc { id: b.id.clone(), kind: b.kind.name().to_string(), rates }
        })
        .collect();
    let wires = diagram
        .wires
        .iter()
        .map(|w| WireDoc {
            from: w.from.to_string(),
            to: format!("{}.{}", w.to_block, w.to_port.as_str()),
        })
        .collect();
    DesignDoc {
        name: Some(diagram.name.clone()),
        references: diagram.references.clone(),
        blocks,
        wires,
        output: diagram.output.clone(),
        annihilation_rate_per_molar: diagram.annihilation_rate_per_molar,
    }
}

/// Serializes a diagram as a pretty-printed design document.
pub fn render_document(diagram: &BlockDiagram) -> String {
    let mut text = serde_json::to_string_pretty(&document_of(diagram))
        .expect("design documents always serialize");
    text.push('\n');
    text
}
