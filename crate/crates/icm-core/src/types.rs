//! Identifiers shared across the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Hierarchical path naming one hookable attention sublayer,
/// e.g. `"mid.0.attn.self"` or `"up.1.attn.cross"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerId(pub String);

impl LayerId {
    pub fn new(s: impl Into<String>) -> Self {
        LayerId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether this names a self-attention site (`…attn.self`).
    pub fn is_self_attn(&self) -> bool {
        self.0.ends_with(".attn.self")
    }

    /// Whether this names a cross-attention site (`…attn.cross`).
    pub fn is_cross_attn(&self) -> bool {
        self.0.ends_with(".attn.cross")
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LayerId {
    fn from(s: &str) -> Self {
        LayerId(s.to_string())
    }
}

/// Classifier-free-guidance branch a forward pass belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Conditional,
    Unconditional,
}

impl Branch {
    pub fn as_u8(self) -> u8 {
        match self {
            Branch::Conditional => 0,
            Branch::Unconditional => 1,
        }
    }

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Branch::Conditional),
            1 => Some(Branch::Unconditional),
            _ => None,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Conditional => f.write_str("conditional"),
            Branch::Unconditional => f.write_str("unconditional"),
        }
    }
}
