//! On-disk JSON formats: tree descriptions, measures and cylinder functions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTree {
    pub root: String,
    #[serde(default)]
    pub edges: Vec<RawEdge>,
    #[serde(default)]
    pub tails: Vec<RawTail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEdge {
    pub a: String,
    pub b: String,
    pub p_ab: f64,
    pub p_ba: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawTailKind {
    Ray,
    Homogeneous,
}

/// A self-similar infinite tail hanging off a core vertex.
///
/// `entry_p` is the probability of stepping from the attach vertex to each
/// first-level tail vertex. `width` is the number of first-level vertices; it
/// defaults to `branching` for homogeneous tails and to 1 for rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTail {
    pub id: String,
    pub attach: String,
    pub kind: RawTailKind,
    pub entry_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub back: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub back_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMeasure {
    pub reference: String,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<RawTailWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTailWeights {
    pub id: String,
    pub ratio: f64,
    pub head: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCylinderFunction {
    #[serde(default)]
    pub cut: Vec<RawCutEntry>,
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCutEntry {
    pub vertex: String,
    pub value: f64,
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}
