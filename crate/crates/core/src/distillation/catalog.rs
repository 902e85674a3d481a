use serde::{Deserialize, Serialize};

use super::ProtocolSpec;
use crate::error::{PlanError, Result};

const BUILTIN: &str = include_str!("catalog.json");
const SCHEMA_VERSION: u32 = 1;

/// Immutable set of named protocols loaded from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolCatalog {
    pub schema_version: u32,
    /// Names used for headline comparisons; every other entry is auxiliary.
    pub primary: Vec<String>,
    pub protocols: Vec<ProtocolSpec>,
}

impl ProtocolCatalog {
    /// Double-select, EXPEDIENT and STRINGENT plus the two single-selection
    /// recurrences used for validation.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let catalog: Self =
            serde_json::from_str(text).map_err(|e| PlanError::Catalog(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PlanError::Catalog(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (i, p) in self.protocols.iter().enumerate() {
            p.validate()?;
            if self.protocols[..i].iter().any(|q| q.name == p.name) {
                return Err(PlanError::Catalog(format!("duplicate protocol {}", p.name)));
            }
        }
        for name in &self.primary {
            self.get(name)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ProtocolSpec> {
        self.protocols
            .iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| PlanError::Catalog(format!("unknown protocol {name:?}")))
    }

    pub fn primary(&self) -> Vec<&ProtocolSpec> {
        self.primary
            .iter()
            .map(|n| self.get(n).expect("validated"))
            .collect()
    }

    /// Resolves a list of names, or the primary set when `names` is empty.
    pub fn select(&self, names: &[String]) -> Result<Vec<ProtocolSpec>> {
        if names.is_empty() {
            return Ok(self.primary().into_iter().cloned().collect());
        }
        names.iter().map(|n| self.get(n).cloned()).collect()
    }
}
