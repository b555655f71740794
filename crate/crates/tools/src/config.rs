//! The shared configuration document custodians agree on.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dpbv_core::{Attribute, EncodingConfig, Schema};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// On-disk form of a [`Schema`]. When `attributes` is empty, `attribute_count`
/// attributes (default 1) share the base range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub lower: f64,
    pub upper: f64,
    pub t: f64,
    pub s: usize,
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_count: Option<usize>,
}

impl ConfigFile {
    pub fn base(&self) -> Result<EncodingConfig> {
        Ok(EncodingConfig::new(self.lower, self.upper, self.t, self.s, self.epsilon, self.seed)?)
    }

    pub fn to_schema(&self) -> Result<Schema> {
        let base = self.base()?;
        if self.attributes.is_empty() {
            return Ok(Schema::uniform(base, self.attribute_count.unwrap_or(1))?);
        }
        let attributes = self
            .attributes
            .iter()
            .map(|a| Attribute {
                name: a.name.clone(),
                lower: a.lower,
                upper: a.upper,
            })
            .collect();
        Ok(Schema::new(base, attributes)?)
    }

    pub fn from_schema(schema: &Schema) -> Self {
        let b = schema.base();
        ConfigFile {
            lower: b.lower(),
            upper: b.upper(),
            t: b.t(),
            s: b.s(),
            epsilon: b.epsilon(),
            seed: b.seed(),
            attributes: schema
                .attributes()
                .iter()
                .map(|a| AttributeSpec {
                    name: a.name.clone(),
                    lower: a.lower,
                    upper: a.upper,
                })
                .collect(),
            attribute_count: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing config {}", path.display()))
    }
}

/// Loads a config file straight into a validated schema.
pub fn load_schema(path: &Path) -> Result<Schema> {
    ConfigFile::load(path)?.to_schema()
}
