//! Parameters that every custodian must agree on before encoding.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which embedding produced a bit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// Plain interval-membership bits, no randomized response.
    Bv,
    /// Interval-membership bits passed through per-bit randomized response.
    Dpbv,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Bv => "bv",
            Mechanism::Dpbv => "dpbv",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Mechanism::Bv => 0,
            Mechanism::Dpbv => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mechanism::Bv),
            1 => Some(Mechanism::Dpbv),
            _ => None,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bv" | "BV" => Ok(Mechanism::Bv),
            "dpbv" | "DPBV" => Ok(Mechanism::Dpbv),
            other => Err(Error::param(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// Truncated SHA-256 digest identifying a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl core::str::FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16)
            .map(Fingerprint)
            .map_err(|_| Error::param(format!("malformed fingerprint `{s}`")))
    }
}

/// Encoding parameters for one scalar attribute.
///
/// The encoding range is the data range widened by `t` on both sides, so that
/// values at the edges of `[lower, upper]` have full-width windows. Its length
/// is [`mu`](Self::mu).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    lower: f64,
    upper: f64,
    t: f64,
    s: usize,
    epsilon: f64,
    seed: u64,
}

impl EncodingConfig {
    pub fn new(lower: f64, upper: f64, t: f64, s: usize, epsilon: f64, seed: u64) -> Result<Self> {
        let config = EncodingConfig {
            lower,
            upper,
            t,
            s,
            epsilon,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::config("range bounds must be finite"));
        }
        if self.upper <= self.lower {
            return Err(Error::config("upper must exceed lower"));
        }
        if !self.t.is_finite() || self.t <= 0.0 {
            return Err(Error::config("t must be positive"));
        }
        if self.s == 0 {
            return Err(Error::config("s must be at least 1"));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::config("epsilon must be positive"));
        }
        let mu = self.mu();
        if !(mu > 0.0 && 2.0 * self.t <= mu) {
            return Err(Error::config("encoding range is degenerate"));
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Length of the widened encoding range, `(upper - lower) + 2t`.
    pub fn mu(&self) -> f64 {
        (self.upper - self.lower) + 2.0 * self.t
    }

    /// `[lower - t, upper + t]`, the support of the thresholds.
    pub fn threshold_range(&self) -> (f64, f64) {
        (self.lower - self.t, self.upper + self.t)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Same parameters over a different data range.
    pub fn with_range(&self, lower: f64, upper: f64) -> Result<Self> {
        EncodingConfig::new(lower, upper, self.t, self.s, self.epsilon, self.seed)
    }

    pub fn with_s(&self, s: usize) -> Result<Self> {
        EncodingConfig::new(self.lower, self.upper, self.t, s, self.epsilon, self.seed)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        EncodingConfig::new(self.lower, self.upper, self.t, self.s, epsilon, self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EncodingConfig { seed, ..*self }
    }

    fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update(self.lower.to_bits().to_le_bytes());
        hasher.update(self.upper.to_bits().to_le_bytes());
        hasher.update(self.t.to_bits().to_le_bytes());
        hasher.update((self.s as u64).to_le_bytes());
        hasher.update(self.epsilon.to_bits().to_le_bytes());
        hasher.update(self.seed.to_le_bytes());
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        hasher.update(b"dpbv-config/v1");
        self.hash_into(&mut hasher);
        truncate(hasher)
    }
}

fn truncate(hasher: Sha256) -> Fingerprint {
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    Fingerprint(u64::from_le_bytes(head))
}

/// A named attribute with its own data range.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// Shared `t`, `s`, `ε` and seed plus the per-attribute ranges of a dataset.
///
/// Each attribute gets an independent hash family derived from the shared seed
/// and the attribute's index.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    base: EncodingConfig,
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(base: EncodingConfig, attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::config("schema needs at least one attribute"));
        }
        for attribute in &attributes {
            base.with_range(attribute.lower, attribute.upper).map_err(|e| {
                Error::config(format!("attribute `{}`: {e}", attribute.name))
            })?;
        }
        Ok(Schema { base, attributes })
    }

    /// `d` attributes named `a0..a{d-1}`, all using the base range.
    pub fn uniform(base: EncodingConfig, d: usize) -> Result<Self> {
        let attributes = (0..d)
            .map(|i| Attribute {
                name: format!("a{i}"),
                lower: base.lower(),
                upper: base.upper(),
            })
            .collect();
        Schema::new(base, attributes)
    }

    pub fn base(&self) -> &EncodingConfig {
        &self.base
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn dimension(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute_config(&self, index: usize) -> Result<EncodingConfig> {
        let attribute = self.attributes.get(index).ok_or(Error::DimensionMismatch {
            expected: self.attributes.len(),
            found: index + 1,
        })?;
        self.base.with_range(attribute.lower, attribute.upper)
    }

    pub fn attribute_configs(&self) -> Vec<EncodingConfig> {
        (0..self.dimension())
            .map(|i| self.attribute_config(i).expect("validated at construction"))
            .collect()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        hasher.update(b"dpbv-schema/v1");
        self.base.hash_into(&mut hasher);
        hasher.update((self.attributes.len() as u64).to_le_bytes());
        for attribute in &self.attributes {
            hasher.update((attribute.name.len() as u64).to_le_bytes());
            hasher.update(attribute.name.as_bytes());
            hasher.update(attribute.lower.to_bits().to_le_bytes());
            hasher.update(attribute.upper.to_bits().to_le_bytes());
        }
        truncate(hasher)
    }
}
